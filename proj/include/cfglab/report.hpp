#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cfglab/evaldata.hpp"
#include "cfglab/matrix.hpp"

namespace cfglab {

/// One experiment-grid cell. NaN in w_train / noise_floor means
/// not-applicable and is written as an empty CSV field.
struct ReportRow {
    std::string loss_mode;  // "standard" | "updated"
    double w_train = 0.0;
    double w_sample = 0.0;
    std::string sampler;  // "ddpm" | "ddim"
    int n_steps = 0;
    std::uint64_t seed = 0;
    std::string metric;  // "energy" | "energy_rel" | "sw"
    double value = 0.0;
    double noise_floor = 0.0;
};

struct RunReport {
    std::string digest;
    std::vector<ReportRow> rows;
};

/// Streaming CSV writer: digest comment + header up front, one flushed line
/// per row, so a crashed run leaves a valid partial file (no torn rows).
class ReportWriter {
  public:
    ReportWriter(const std::filesystem::path& path, const std::string& digest);
    void write(const ReportRow& row);
    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
    std::ofstream out_;
};

RunReport read_report_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Sample CSVs: header `x,y,class,w,sampler,steps,seed`, one row per point,
// floats at 17 significant digits, digest on a leading comment line.

struct SampleCsv {
    SampleSet samples;  // labels hold the class column (-1 = unconditional)
    double w = 0.0;
    std::string sampler;
    int steps = 0;
    std::uint64_t seed = 0;
    std::string digest;
};

void write_samples_csv(const std::filesystem::path& path, const Matrix& points,
                       std::span<const int> labels, double w, const std::string& sampler, int steps,
                       std::uint64_t seed, const std::string& digest);

SampleCsv read_samples_csv(const std::filesystem::path& path);

}  // namespace cfglab
