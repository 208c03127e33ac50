#pragma once

// Pre-training (CG and CM on a repeating [CG, CG, CG, CM] cycle) and fine-tuning
// (CG only) with Adam, linear warmup and periodic checkpoints.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "boxcap/checkpoint.hpp"
#include "boxcap/dataio.hpp"
#include "boxcap/model_config.hpp"
#include "boxcap/net.hpp"
#include "boxcap/textcodec.hpp"

namespace boxcap::trainer {

struct TrainConfig {
  std::int64_t steps = 1000;
  std::int64_t warmup = 4000;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  /// 0 writes a checkpoint only when the run ends.
  std::int64_t checkpoint_every = 0;
  /// Curriculum step = max(1, round(step * schedule_scale)).
  double schedule_scale = 1.0;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static TrainConfig from_map(const std::map<std::string, std::string>& kv);
};

/// Model and training settings read from one flat key=value file.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

/// Every key is required; '#' starts a comment. Unknown keys are rejected.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string format_run_config(const RunConfig& cfg);

enum class Task { kCG, kCM };
std::string to_string(Task t);

enum class Mode { kPretrain, kFinetune };

/// Task of 1-based step `step`.
Task task_at(Mode mode, std::int64_t step);
double lr_at(const TrainConfig& cfg, std::int64_t step);

struct LossRecord {
  std::int64_t step = 0;
  Task task = Task::kCG;
  double loss = 0.0;
  double lr = 0.0;
};

std::string format_loss_row(const LossRecord& r);
inline constexpr const char* kLossHeader = "step,task,loss,lr";

class Trainer {
 public:
  /// Fresh model initialised from cfg.train.seed. The vocabulary fixes cfg.model.vocab.
  Trainer(const RunConfig& cfg, textcodec::Vocabulary vocab, Mode mode);
  /// Continues a checkpoint: resume keeps step, optimizer and rng state; otherwise only
  /// the weights are kept and the step counter restarts at 0.
  Trainer(const net::Checkpoint& ckpt, const TrainConfig& train, Mode mode, bool resume);

  /// Precomputes per-card inputs. Cards must have at least two boxes.
  void set_data(std::vector<dataio::Card> cards);

  /// One optimizer step; throws NumericalError without touching the weights on a
  /// non-finite loss or gradient.
  LossRecord step();
  /// Loss on an explicit batch without updating anything.
  double evaluate_cg(std::span<const net::SampleInput> batch);

  /// Steps until cfg.train.steps. Appends to out_dir/loss.csv and keeps
  /// out_dir/model.ckpt as the most recent good checkpoint.
  std::vector<LossRecord> run(const std::filesystem::path& out_dir);

  net::Checkpoint checkpoint() const;

  net::CaptionModel& model() { return *model_; }
  const textcodec::Vocabulary& vocab() const { return vocab_; }
  const RunConfig& config() const { return cfg_; }
  std::int64_t current_step() const { return step_; }

  /// Applies one Adam update using gradients already accumulated in the parameters.
  void apply_update(double lr);

 private:
  void init_optimizer();
  std::vector<net::SampleInput> draw_cg_batch();
  std::vector<net::SampleInput> draw_cm_batch(std::vector<int>& labels);

  RunConfig cfg_;
  textcodec::Vocabulary vocab_;
  Mode mode_;
  std::unique_ptr<net::CaptionModel> model_;
  std::vector<Matrix> m_, v_;
  std::int64_t step_ = 0;
  std::int64_t adam_t_ = 0;
  std::mt19937_64 rng_;
  std::vector<dataio::Card> cards_;
  std::vector<net::CardContext> contexts_;
  std::vector<std::pair<std::size_t, std::size_t>> samples_;
};

/// Full-dataset vocabulary: captions plus info of every card.
textcodec::Vocabulary build_vocabulary(std::span<const dataio::Card> cards);

/// Rebuilds a model from a checkpoint's config and weights.
std::unique_ptr<net::CaptionModel> model_from_checkpoint(const net::Checkpoint& ckpt);

}  // namespace boxcap::trainer
