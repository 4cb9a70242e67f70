#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "diffmatte/data.hpp"
#include "diffmatte/diffusion.hpp"
#include "diffmatte/metrics.hpp"
#include "diffmatte/training.hpp"

namespace diffmatte::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kIo = 3, kValidation = 4, kNumeric = 5 };

/// Entry point shared by the binary and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

std::string version_string();

/// Independent generator for item `index` of a run seeded with `seed`.
Rng item_rng(std::uint64_t seed, std::uint64_t index);

/// Seed precedence: explicit value, then DIFFMATTE_SEED, then `fallback`.
std::uint64_t resolve_seed(const std::string& explicit_seed, std::uint64_t fallback);

struct ItemResult {
  std::string name;
  MetricReport metrics;
  Tensor<float> alpha;  // final matte with known regions imposed
};

/// Samples every item with `steps` reverse steps and scores it. Item i uses item_rng(seed, i),
/// so results do not depend on `jobs`.
std::vector<ItemResult> infer_and_score(const MattingModel& model, const std::vector<DatasetItem>& items, int steps,
                                        SamplerMode mode, std::uint64_t seed, int jobs);

MetricReport mean_report(const std::vector<ItemResult>& results);

struct ConsistencyCurves {
  std::vector<double> sad_self;        // per step, mean over items
  std::vector<double> sad_consistent;  // same, renoising from ground truth
};

/// Per-step SAD of the model's predictions (known regions imposed) under self renoising
/// and ground-truth renoising. Both runs of an item start from the same noise.
ConsistencyCurves diagnose_consistent(const MattingModel& model, const std::vector<DatasetItem>& items, int steps,
                                      std::uint64_t seed, int jobs);

enum class SweepKind { Schedule, InputScale, Nd, Steps };
SweepKind parse_sweep_kind(const std::string& text);
std::string to_string(SweepKind kind);
std::vector<std::string> default_sweep_values(SweepKind kind);

struct SweepRow {
  std::string setting;
  bool ok = false;
  std::string error;
  MetricReport metrics;  // means over the evaluation set
};

struct SweepRequest {
  SweepKind kind = SweepKind::Steps;
  std::vector<std::string> values;
  TrainConfig base;
  std::vector<DatasetItem> train;  // unused for the steps kind
  std::vector<DatasetItem> eval;
  const MattingModel* checkpoint = nullptr;  // required for the steps kind
  int steps = 10;
  std::uint64_t seed = 0;
  int jobs = 1;
};

std::vector<SweepRow> run_sweep(const SweepRequest& request);

std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string eval_csv(const std::vector<ItemResult>& results);
std::string consistency_csv(const ConsistencyCurves& curves);

}  // namespace diffmatte::cli
