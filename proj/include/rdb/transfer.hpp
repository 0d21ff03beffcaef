#ifndef RDB_TRANSFER_HPP_
#define RDB_TRANSFER_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "rdb/evaluation.hpp"
#include "rdb/training.hpp"

namespace rdb {

// Module combinations of the transfer matrix. "src" modules come from the
// source run directory; "targ" modules are trained on the target suite.
enum class TransferMode {
  kRandom,         // uniform-random baseline
  kTargetS,        // B(s) trained on the target
  kTargetFull,     // R, D, B all trained on the target
  kSourceS,        // B(s) from the source
  kSourceFull,     // R, D, B from the source
  kUntrainedD,     // B from source, R on target, D seeded random
  kUnsupervisedD,  // B from source, R on target, D on target with noise conditioning
  kWeakD,          // B from source, R on target, D on target with positions
};

std::string to_string(TransferMode mode);
TransferMode parse_transfer_mode(const std::string& text);
std::vector<TransferMode> all_transfer_modes();
bool uses_source_predictor(TransferMode mode);

struct TransferConfig {
  TransferMode mode = TransferMode::kUnsupervisedD;
  std::filesystem::path source_run;  // r.ckpt, d.ckpt, b.ckpt, optional b_s.ckpt
  PipelineConfig target;             // target-side training; holdout selects the test set
  EvalOptions eval;
  double tau = 0.5;
  ContextMode context = ContextMode::kClosedLoop;
};

struct TransferResult {
  MetricReport report;
  std::string b_hash_before;  // source B checkpoint, when the mode uses it
  std::string b_hash_after;
};

// target_run (optional) receives checkpoints of target-trained modules.
TransferResult run_transfer(const TransferConfig& cfg, const std::vector<Scene>& target,
                            const std::optional<std::filesystem::path>& target_run = {});

}  // namespace rdb

#endif  // RDB_TRANSFER_HPP_
