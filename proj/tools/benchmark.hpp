#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace fmtk {

// The whole study on synthetic data, per seed: generate S and Q, train
// the Teacher on S, pseudo-label Q, pre-train the single-task model,
// run the extended-training control, fine-tune the multi-task model
// (plus a hard-pseudo-label pair with and without injected label noise
// at the Teacher's measured error rate), then evaluate everything on
// Q's test split including GradCAM localization probes.
struct BenchmarkOptions {
  int seeds = 5;
  uint64_t base_seed = 0;
  std::string out_dir;
  int image_size = 32;
  int teacher_count = 300;
  int train_count = 600;
  int val_count = 60;
  int test_count = 200;
  int teacher_epochs = 14;
  int student_epochs = 18;
  int noise_epochs = 12;  // the hard / hard-flipped pair
  int batch_size = 32;
  double lambda_a = 1.0;
  double lambda_b = 1.0;
  int gradcam_probes = 32;
  int b_resamples = 400;
  int workers = 0;  // 0: min(seeds, FMTK_THREADS or hardware)

  nlohmann::ordered_json to_json() const;
  static BenchmarkOptions from_json(const nlohmann::json& j);
};

// Runs one seed into <out>/seed_<k>/ and writes summary.json there.
void run_benchmark_seed(const BenchmarkOptions& opts, int seed_index);

// Fans seeds out to worker processes (self_exe re-invoked with the
// hidden benchmark-worker subcommand), merges per-seed summaries in
// seed order and writes benchmark_report.{json,txt}.
void run_benchmark(const BenchmarkOptions& opts, const std::string& self_exe);

}  // namespace fmtk
