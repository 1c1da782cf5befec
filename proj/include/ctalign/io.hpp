#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctalign/distributions.hpp"
#include "ctalign/metrics.hpp"
#include "ctalign/model.hpp"
#include "ctalign/trainer.hpp"

namespace ctalign::io {

// Embedding file: {"dim": d, "count": n, "weights": [...] (optional),
//                  "data": [d*n reals, row-major d x n]}
// i.e. point k is column k of the d x n support matrix.
struct LoadedPointSet {
  DiscretePointSet set;
  bool weights_defaulted = false;
};

// Throws ParseError (with a line number) on malformed input, ShapeError when
// the data length disagrees with dim * count, SimplexError for bad weights.
LoadedPointSet parse_point_set(const std::string& text);
LoadedPointSet read_point_set(const std::filesystem::path& path);
nlohmann::json point_set_to_json(const DiscretePointSet& set);

std::string read_text(const std::filesystem::path& path);
// Creates parent directories as needed.
void write_text(const std::filesystem::path& path, const std::string& text);

// Shortest round-trip representation for checkpoints, fixed six decimals
// for CSV.
std::string format_fixed6(double value);

std::string matrix_to_csv(const Matrix& m);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json params_to_json(const ToyModelParams& params);
// Shapes come from the JSON; the navigator projections are optional.
ToyModelParams params_from_json(const nlohmann::json& j);

nlohmann::json dataset_to_json(std::span<const SyntheticSample> samples);
std::vector<SyntheticSample> dataset_from_json(const nlohmann::json& j);

std::string trace_to_csv(std::span<const EpochRecord> trace);

std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& label, const MetricsReport& report);

}  // namespace ctalign::io
