#include "cfglab/report.hpp"

#include <cmath>
#include <sstream>

#include "cfglab/config.hpp"
#include "cfglab/errors.hpp"

namespace cfglab {

namespace {

constexpr const char* kReportHeader =
    "loss_mode,w_train,w_sample,sampler,n_steps,seed,metric,value,noise_floor";
constexpr const char* kSamplesHeader = "x,y,class,w,sampler,steps,seed";

std::string optional_field(double v) { return std::isnan(v) ? "" : format_double(v); }

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_optional_double(const std::string& s, const char* what) {
    if (s.empty()) return std::nan("");
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw IoError(std::string(what) + ": bad number '" + s + "'");
    }
}

}  // namespace

ReportWriter::ReportWriter(const std::filesystem::path& path, const std::string& digest)
    : path_(path), out_(path) {
    if (!out_) throw IoError("cannot write report: " + path.string());
    out_ << "# config " << digest << "\n" << kReportHeader << "\n";
    out_.flush();
    if (!out_) throw IoError("report write failed: " + path.string());
}

void ReportWriter::write(const ReportRow& row) {
    out_ << row.loss_mode << ',' << optional_field(row.w_train) << ','
         << format_double(row.w_sample) << ',' << row.sampler << ',' << row.n_steps << ','
         << row.seed << ',' << row.metric << ',' << format_double(row.value) << ','
         << optional_field(row.noise_floor) << "\n";
    out_.flush();
    if (!out_) throw IoError("report write failed: " + path_.string());
}

RunReport read_report_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report: " + path.string());
    RunReport report;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ls(line);
            std::string hash, word, digest;
            ls >> hash >> word >> digest;
            if (word == "config") report.digest = digest;
            continue;
        }
        if (!header_seen) {
            if (split_csv_line(line).size() != 9) throw IoError("report header malformed: " + path.string());
            header_seen = true;
            continue;
        }
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != 9) throw IoError("report row malformed: " + path.string());
        ReportRow row;
        row.loss_mode = f[0];
        row.w_train = parse_optional_double(f[1], "report w_train");
        row.w_sample = parse_optional_double(f[2], "report w_sample");
        row.sampler = f[3];
        row.n_steps = static_cast<int>(parse_optional_double(f[4], "report n_steps"));
        row.seed = static_cast<std::uint64_t>(parse_optional_double(f[5], "report seed"));
        row.metric = f[6];
        row.value = parse_optional_double(f[7], "report value");
        row.noise_floor = parse_optional_double(f[8], "report noise_floor");
        report.rows.push_back(std::move(row));
    }
    return report;
}

void write_samples_csv(const std::filesystem::path& path, const Matrix& points,
                       std::span<const int> labels, double w, const std::string& sampler, int steps,
                       std::uint64_t seed, const std::string& digest) {
    if (points.cols != 2) throw ShapeError("write_samples_csv: points must be n×2");
    if (!labels.empty() && static_cast<int>(labels.size()) != points.rows) {
        throw ShapeError("write_samples_csv: one label per row");
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write samples: " + path.string());
    out << "# config " << digest << "\n" << kSamplesHeader << "\n";
    for (int i = 0; i < points.rows; ++i) {
        const int cls = labels.empty() ? -1 : labels[i];
        out << format_double(points.at(i, 0)) << ',' << format_double(points.at(i, 1)) << ','
            << cls << ',' << format_double(w) << ',' << sampler << ',' << steps << ',' << seed
            << "\n";
    }
    out.flush();
    if (!out) throw IoError("samples write failed: " + path.string());
}

SampleCsv read_samples_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open samples: " + path.string());
    SampleCsv csv;
    std::vector<double> xs, ys;
    std::string line;
    bool header_seen = false;
    bool meta_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ls(line);
            std::string hash, word, digest;
            ls >> hash >> word >> digest;
            if (word == "config") csv.digest = digest;
            continue;
        }
        if (!header_seen) {
            if (line.rfind("x,y,class", 0) != 0) throw IoError("samples header malformed: " + path.string());
            header_seen = true;
            continue;
        }
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != 7) throw IoError("samples row malformed: " + path.string());
        xs.push_back(parse_optional_double(f[0], "samples x"));
        ys.push_back(parse_optional_double(f[1], "samples y"));
        csv.samples.labels.push_back(static_cast<int>(parse_optional_double(f[2], "samples class")));
        if (!meta_seen) {
            csv.w = parse_optional_double(f[3], "samples w");
            csv.sampler = f[4];
            csv.steps = static_cast<int>(parse_optional_double(f[5], "samples steps"));
            csv.seed = static_cast<std::uint64_t>(std::stoull(f[6]));
            meta_seen = true;
        }
    }
    if (!header_seen) throw IoError("samples file has no header: " + path.string());
    csv.samples.points = Matrix(static_cast<int>(xs.size()), 2);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        csv.samples.points.at(static_cast<int>(i), 0) = xs[i];
        csv.samples.points.at(static_cast<int>(i), 1) = ys[i];
    }
    csv.samples.provenance = csv.digest;
    return csv;
}

}  // namespace cfglab
