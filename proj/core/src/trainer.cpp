#include "boxcap/trainer.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "boxcap/curriculum.hpp"

namespace boxcap::trainer {
namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double parse_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(x))
    throw std::invalid_argument("config key '" + key + "': expected a number, got '" + v + "'");
  return x;
}

template <class Int>
Int parse_integer(const std::string& key, const std::string& v) {
  Int x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw std::invalid_argument("config key '" + key + "': expected an integer, got '" + v + "'");
  return x;
}

const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw std::invalid_argument("missing config key '" + key + "'");
  return it->second;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const std::set<std::string> kModelKeys = {"layers", "width", "heads", "grid", "max_caption_len", "max_info_len",
                                          "neighbors", "use_image", "use_info", "use_location"};

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& f, const std::string& why) {
    throw std::invalid_argument("train config '" + f + "': " + why);
  };
  if (steps < 0) fail("steps", "must be non-negative");
  if (warmup < 0) fail("warmup", "must be non-negative");
  if (batch_size < 1) fail("batch_size", "must be at least 1");
  if (!(lr > 0.0)) fail("lr", "must be positive");
  if (checkpoint_every < 0) fail("checkpoint_every", "must be non-negative");
  if (!(schedule_scale > 0.0)) fail("schedule_scale", "must be positive");
  if (clip_norm < 0.0) fail("clip_norm", "must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps", "must be positive");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {{"steps", std::to_string(steps)},
          {"warmup", std::to_string(warmup)},
          {"batch_size", std::to_string(batch_size)},
          {"lr", fmt_double(lr)},
          {"seed", std::to_string(seed)},
          {"checkpoint_every", std::to_string(checkpoint_every)},
          {"schedule_scale", fmt_double(schedule_scale)},
          {"clip_norm", fmt_double(clip_norm)},
          {"beta1", fmt_double(beta1)},
          {"beta2", fmt_double(beta2)},
          {"adam_eps", fmt_double(adam_eps)}};
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  c.steps = parse_integer<std::int64_t>("steps", need(kv, "steps"));
  c.warmup = parse_integer<std::int64_t>("warmup", need(kv, "warmup"));
  c.batch_size = parse_integer<int>("batch_size", need(kv, "batch_size"));
  c.lr = parse_double("lr", need(kv, "lr"));
  c.seed = parse_integer<std::uint64_t>("seed", need(kv, "seed"));
  c.checkpoint_every = parse_integer<std::int64_t>("checkpoint_every", need(kv, "checkpoint_every"));
  c.schedule_scale = parse_double("schedule_scale", need(kv, "schedule_scale"));
  c.clip_norm = parse_double("clip_norm", need(kv, "clip_norm"));
  c.beta1 = parse_double("beta1", need(kv, "beta1"));
  c.beta2 = parse_double("beta2", need(kv, "beta2"));
  c.adam_eps = parse_double("adam_eps", need(kv, "adam_eps"));
  return c;
}

RunConfig parse_run_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  const std::set<std::string> train_keys = [] {
    std::set<std::string> s;
    for (const auto& [k, v] : TrainConfig{}.to_map()) s.insert(k);
    return s;
  }();
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (!kModelKeys.contains(key) && !train_keys.contains(key))
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (kv.contains(key)) throw std::invalid_argument("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv[key] = trim(line.substr(eq + 1));
  }
  RunConfig cfg;
  cfg.model = ModelConfig::from_map(kv);
  cfg.train = TrainConfig::from_map(kv);
  cfg.train.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string format_run_config(const RunConfig& cfg) {
  std::string s;
  for (const auto& [k, v] : cfg.model.to_map())
    if (k != "vocab") s += k + "=" + v + "\n";
  for (const auto& [k, v] : cfg.train.to_map()) s += k + "=" + v + "\n";
  return s;
}

std::string to_string(Task t) { return t == Task::kCG ? "CG" : "CM"; }

Task task_at(Mode mode, std::int64_t step) {
  if (step < 1) throw std::invalid_argument("task_at: steps are 1-based");
  if (mode == Mode::kFinetune) return Task::kCG;
  return step % 4 == 0 ? Task::kCM : Task::kCG;
}

double lr_at(const TrainConfig& cfg, std::int64_t step) {
  if (cfg.warmup <= 0) return cfg.lr;
  return cfg.lr * std::min(static_cast<double>(step) / static_cast<double>(cfg.warmup), 1.0);
}

std::string format_loss_row(const LossRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%lld,%s,%.9g,%.9g", static_cast<long long>(r.step), to_string(r.task).c_str(),
                r.loss, r.lr);
  return buf;
}

textcodec::Vocabulary build_vocabulary(std::span<const dataio::Card> cards) {
  std::vector<std::string> texts;
  for (const dataio::Card& c : cards) {
    texts.push_back(c.info);
    for (const dataio::Item& it : c.items) texts.push_back(it.caption);
  }
  return textcodec::Vocabulary::build(texts);
}

std::unique_ptr<net::CaptionModel> model_from_checkpoint(const net::Checkpoint& ckpt) {
  auto model = std::make_unique<net::CaptionModel>(ckpt.model, 0);
  net::import_parameters(*model, ckpt.params);
  return model;
}

Trainer::Trainer(const RunConfig& cfg, textcodec::Vocabulary vocab, Mode mode)
    : cfg_(cfg), vocab_(std::move(vocab)), mode_(mode), rng_(cfg.train.seed) {
  cfg_.model.vocab = vocab_.size();
  cfg_.train.validate();
  model_ = std::make_unique<net::CaptionModel>(cfg_.model, cfg_.train.seed);
  init_optimizer();
}

Trainer::Trainer(const net::Checkpoint& ckpt, const TrainConfig& train, Mode mode, bool resume)
    : vocab_(textcodec::Vocabulary::from_tokens(ckpt.vocab)), mode_(mode), rng_(train.seed) {
  cfg_.model = ckpt.model;
  cfg_.train = train;
  cfg_.train.validate();
  model_ = model_from_checkpoint(ckpt);
  init_optimizer();
  if (resume) {
    step_ = static_cast<std::int64_t>(ckpt.step);
    adam_t_ = step_;
    std::istringstream rs(ckpt.rng_state);
    rs >> rng_;
    if (!rs) throw net::CheckpointError("checkpoint rng state is unreadable");
    auto params = model_->parameters();
    if (ckpt.adam_m.size() != params.size() || ckpt.adam_v.size() != params.size())
      throw net::CheckpointError("checkpoint has no optimizer state to resume from");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (ckpt.adam_m[i].value.rows() != params[i]->value.rows() ||
          ckpt.adam_m[i].value.cols() != params[i]->value.cols() ||
          ckpt.adam_v[i].value.rows() != params[i]->value.rows() ||
          ckpt.adam_v[i].value.cols() != params[i]->value.cols())
        throw net::CheckpointError("optimizer state shape mismatch for '" + params[i]->name + "'");
      m_[i] = ckpt.adam_m[i].value;
      v_[i] = ckpt.adam_v[i].value;
    }
  }
}

void Trainer::init_optimizer() {
  m_.clear();
  v_.clear();
  for (Parameter* p : model_->parameters()) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
  adam_t_ = 0;
}

void Trainer::set_data(std::vector<dataio::Card> cards) {
  if (cards.empty()) throw std::invalid_argument("training data is empty");
  cards_ = std::move(cards);
  contexts_.clear();
  samples_.clear();
  for (std::size_t c = 0; c < cards_.size(); ++c) {
    if (cards_[c].items.size() < 2)
      throw std::invalid_argument("card " + cards_[c].id + " has fewer than 2 boxes");
    contexts_.push_back(net::prepare_card(cards_[c], vocab_, cfg_.model));
    for (std::size_t b = 0; b < cards_[c].items.size(); ++b) samples_.emplace_back(c, b);
  }
}

std::vector<net::SampleInput> Trainer::draw_cg_batch() {
  std::uniform_int_distribution<std::size_t> pick(0, samples_.size() - 1);
  std::vector<net::SampleInput> batch;
  for (int i = 0; i < cfg_.train.batch_size; ++i) {
    const auto [c, b] = samples_[pick(rng_)];
    batch.push_back(net::make_sample(contexts_[c], cards_[c], b,
                                     net::encode_caption(cards_[c].items[b].caption, vocab_, cfg_.model), cfg_.model,
                                     &rng_));
  }
  return batch;
}

std::vector<net::SampleInput> Trainer::draw_cm_batch(std::vector<int>& labels) {
  std::uniform_int_distribution<std::size_t> pick(0, samples_.size() - 1);
  const auto cstep = std::max<std::int64_t>(
      1, std::llround(static_cast<double>(step_) * cfg_.train.schedule_scale));
  const curriculum::Schedule mix = curriculum::schedule(cstep);
  std::vector<net::SampleInput> batch;
  labels.clear();
  for (int i = 0; i < cfg_.train.batch_size; ++i) {
    const auto [c, b] = samples_[pick(rng_)];
    const curriculum::CmSample s = curriculum::make_cm_sample(cards_, c, b, rng_, mix);
    labels.push_back(s.label);
    batch.push_back(net::make_sample(contexts_[c], cards_[c], b, net::encode_caption(s.caption, vocab_, cfg_.model),
                                     cfg_.model, &rng_));
  }
  return batch;
}

double Trainer::evaluate_cg(std::span<const net::SampleInput> batch) {
  Tape tape;
  net::ForwardResult r = model_->forward(tape, batch, net::MaskMode::kGeneration);
  std::vector<std::vector<int>> targets;
  for (const net::SampleInput& s : batch) targets.push_back(net::caption_targets(s));
  return net::cg_loss(r.logits, targets).scalar();
}

void Trainer::apply_update(double lr) {
  auto params = model_->parameters();
  double norm2 = 0.0;
  for (Parameter* p : params) norm2 += p->grad.squaredNorm();
  if (!std::isfinite(norm2)) throw NumericalError("non-finite gradient norm");
  double factor = 1.0;
  const double norm = std::sqrt(norm2);
  if (cfg_.train.clip_norm > 0.0 && norm > cfg_.train.clip_norm) factor = cfg_.train.clip_norm / norm;

  ++adam_t_;
  const double b1 = cfg_.train.beta1, b2 = cfg_.train.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix g = params[i]->grad * factor;
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseProduct(g);
    params[i]->value.array() -=
        lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.train.adam_eps);
  }
}

LossRecord Trainer::step() {
  if (samples_.empty()) throw std::logic_error("Trainer::step: call set_data first");
  const std::int64_t next = step_ + 1;
  LossRecord rec{next, task_at(mode_, next), 0.0, lr_at(cfg_.train, next)};
  for (Parameter* p : model_->parameters()) p->zero_grad();

  const std::int64_t saved_step = step_;
  step_ = next;  // the CM batch reads the curriculum at the current step
  try {
    Tape tape;
    Var loss;
    if (rec.task == Task::kCG) {
      const auto batch = draw_cg_batch();
      net::ForwardResult r = model_->forward(tape, batch, net::MaskMode::kGeneration);
      std::vector<std::vector<int>> targets;
      for (const net::SampleInput& s : batch) targets.push_back(net::caption_targets(s));
      loss = net::cg_loss(r.logits, targets);
    } else {
      std::vector<int> labels;
      const auto batch = draw_cm_batch(labels);
      net::ForwardResult r = model_->forward(tape, batch, net::MaskMode::kMatching);
      loss = net::cm_loss(r.match_logit, labels);
    }
    rec.loss = loss.scalar();
    if (!std::isfinite(rec.loss))
      throw NumericalError("non-finite " + to_string(rec.task) + " loss at step " + std::to_string(next));
    tape.backward(loss);
    apply_update(rec.lr);
  } catch (...) {
    step_ = saved_step;
    throw;
  }
  return rec;
}

std::vector<LossRecord> Trainer::run(const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto log_path = out_dir / "loss.csv";
  const bool append = step_ > 0 && std::filesystem::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + log_path.string());
  if (!append) log << kLossHeader << "\n";

  std::vector<LossRecord> out;
  const auto ckpt_path = out_dir / "model.ckpt";
  while (step_ < cfg_.train.steps) {
    const LossRecord r = step();
    out.push_back(r);
    log << format_loss_row(r) << "\n";
    if (cfg_.train.checkpoint_every > 0 && step_ % cfg_.train.checkpoint_every == 0)
      net::save_checkpoint(checkpoint(), ckpt_path);
  }
  log.flush();
  net::save_checkpoint(checkpoint(), ckpt_path);
  return out;
}

net::Checkpoint Trainer::checkpoint() const {
  net::Checkpoint c;
  c.model = cfg_.model;
  c.train = cfg_.train.to_map();
  c.vocab = vocab_.tokens();
  c.step = static_cast<std::uint64_t>(step_);
  std::ostringstream rs;
  rs << rng_;
  c.rng_state = rs.str();
  c.params = net::export_parameters(*model_);
  const auto params = model_->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.adam_m.push_back({params[i]->name, m_[i]});
    c.adam_v.push_back({params[i]->name, v_[i]});
  }
  return c;
}

}  // namespace boxcap::trainer
