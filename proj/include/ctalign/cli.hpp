#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctalign/error.hpp"
#include "ctalign/model.hpp"
#include "ctalign/trainer.hpp"
#include "ctalign/transport.hpp"

namespace ctalign::cli {

// Process exit codes. 0 success, 1 unexpected failure, 2 bad command line,
// then one code per error class.
int exit_code(ErrorKind kind);
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

struct SweepGrid {
  std::vector<double> alpha;
  std::vector<std::size_t> start_layer;
  std::vector<std::size_t> topk;
};

// Everything a run depends on. One seed drives data, init and shuffling.
struct RunConfig {
  std::uint64_t seed = 42;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  SinkhornOptions sinkhorn;
  std::size_t eval_top_k = 3;
  SweepGrid sweep;

  // Copies seed into the nested configs and validates them.
  void finalize();
};

nlohmann::json to_json(const RunConfig& cfg);
// Starts from defaults; rejects unknown keys and ill-typed values with
// ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);

// Entry point shared by the executable and the tests. args excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ctalign::cli
