#include "boxcap/net.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>

namespace boxcap::net {
namespace {

Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Parameter weight(const std::string& name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
  return {name, normal(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng)};
}

Parameter zeros(const std::string& name, Eigen::Index cols) { return {name, Matrix::Zero(1, cols)}; }
Parameter ones(const std::string& name, Eigen::Index cols) { return {name, Matrix::Ones(1, cols)}; }

void check_finite(const Matrix& m, const std::string& stage) {
  if (!m.allFinite())
    throw NumericalError("non-finite activation after " + stage + " (" + std::to_string(m.rows()) +
                         "x" + std::to_string(m.cols()) + ")");
}

Var repeat_row(Tape& tape, Parameter& p, Eigen::Index n) {
  const std::vector<Eigen::Index> idx(static_cast<std::size_t>(n), 0);
  return ops::gather_rows(tape.param(p), idx);
}

}  // namespace

BoolMatrix build_attention_mask(int context_len, int caption_len, int total_len, MaskMode mode) {
  if (context_len < 0 || caption_len < 0)
    throw std::invalid_argument("build_attention_mask: lengths must be non-negative");
  const int used = context_len + caption_len;
  if (total_len < 0) total_len = used;
  if (total_len < used) throw std::invalid_argument("build_attention_mask: total_len shorter than content");
  BoolMatrix m = BoolMatrix::Constant(total_len, total_len, false);
  m.topLeftCorner(context_len, context_len).setConstant(true);
  for (int t = 0; t < caption_len; ++t) {
    const int row = context_len + t;
    m.block(row, 0, 1, context_len).setConstant(true);
    const int visible = mode == MaskMode::kGeneration ? t + 1 : caption_len;
    m.block(row, context_len, 1, visible).setConstant(true);
  }
  return m;
}

std::vector<int> caption_targets(const SampleInput& s) {
  std::vector<int> t(static_cast<std::size_t>(s.caption_rows()), -1);
  for (std::size_t i = 0; i < s.caption.size(); ++i) t[i] = s.caption[i];
  t[s.caption.size()] = textcodec::kEos;
  return t;
}

Matrix ForwardResult::sample_logits(std::size_t b) const {
  return logits.value().middleRows(caption_offset.at(b), caption_length.at(b));
}

std::vector<double> ForwardResult::match_scores() const {
  const Matrix& z = match_logit.value();
  std::vector<double> s(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) s[static_cast<std::size_t>(i)] = 1.0 / (1.0 + std::exp(-z(i, 0)));
  return s;
}

CaptionModel::CaptionModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  enc_ = encoders::EncoderParams(cfg_, rng);
  const Eigen::Index d = cfg_.width;
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string pre = "block" + std::to_string(l) + ".";
    BlockParams b;
    b.ln1_g = ones(pre + "ln1.gain", d);
    b.ln1_b = zeros(pre + "ln1.bias", d);
    b.w_qkv = weight(pre + "attn.w_qkv", d, 3 * d, rng);
    b.b_qkv = zeros(pre + "attn.b_qkv", 3 * d);
    b.w_o = weight(pre + "attn.w_o", d, d, rng);
    b.b_o = zeros(pre + "attn.b_o", d);
    b.ln2_g = ones(pre + "ln2.gain", d);
    b.ln2_b = zeros(pre + "ln2.bias", d);
    b.w_ff1 = weight(pre + "ffn.w1", d, 4 * d, rng);
    b.b_ff1 = zeros(pre + "ffn.b1", 4 * d);
    b.w_ff2 = weight(pre + "ffn.w2", 4 * d, d, rng);
    b.b_ff2 = zeros(pre + "ffn.b2", d);
    blocks_.push_back(std::move(b));
  }
  lnf_g_ = ones("final_ln.gain", d);
  lnf_b_ = zeros("final_ln.bias", d);
  cg_w_ = weight("cg_head.w", d, cfg_.vocab, rng);
  cg_b_ = zeros("cg_head.b", cfg_.vocab);
  cm_w_ = weight("cm_head.w", d, 1, rng);
  cm_b_ = zeros("cm_head.b", 1);
}

std::vector<Parameter*> CaptionModel::parameters() {
  std::vector<Parameter*> out = enc_.all();
  for (BlockParams& b : blocks_)
    for (Parameter* p : {&b.ln1_g, &b.ln1_b, &b.w_qkv, &b.b_qkv, &b.w_o, &b.b_o, &b.ln2_g, &b.ln2_b,
                         &b.w_ff1, &b.b_ff1, &b.w_ff2, &b.b_ff2})
      out.push_back(p);
  for (Parameter* p : {&lnf_g_, &lnf_b_, &cg_w_, &cg_b_, &cm_w_, &cm_b_}) out.push_back(p);
  return out;
}

std::vector<const Parameter*> CaptionModel::parameters() const {
  auto mut = const_cast<CaptionModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::size_t CaptionModel::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

Var CaptionModel::embed(Tape& tape, std::span<const SampleInput> batch,
                        std::vector<Eigen::Index>& sample_offset, std::vector<Eigen::Index>& context_len) {
  const auto B = static_cast<Eigen::Index>(batch.size());
  const int k = cfg_.grid;
  const Eigen::Index k2 = Eigen::Index(k) * k;
  Var grid;
  if (cfg_.use_image) {
    Matrix cells(B * k2, encoders::kCellFeatures);
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& c = batch[static_cast<std::size_t>(b)].cells;
      if (!c || c->rows() != k2 || c->cols() != encoders::kCellFeatures)
        throw std::invalid_argument("forward: sample " + std::to_string(b) + " has no pooled image cells for k=" +
                                    std::to_string(k));
      cells.middleRows(b * k2, k2) = *c;
    }
    grid = encoders::visual_backbone(tape, enc_, cells);
  } else {
    grid = repeat_row(tape, enc_.placeholder_image, B * k2);
  }
  Var image = encoders::encode_image(tape, enc_, grid, k);

  Var location;
  if (cfg_.use_location) {
    std::vector<encoders::LocationQuery> queries;
    for (const SampleInput& s : batch) queries.push_back(s.location);
    location = encoders::encode_location(tape, enc_, queries, k);
  } else {
    location = ops::add_row(repeat_row(tape, enc_.placeholder_location, B), tape.param(enc_.seg_location));
  }

  Var info;
  std::vector<Eigen::Index> info_len(batch.size());
  if (cfg_.use_info) {
    std::vector<std::vector<int>> seqs;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      seqs.push_back(batch[b].info);
      info_len[b] = static_cast<Eigen::Index>(batch[b].info.size());
    }
    info = encoders::encode_tokens(tape, enc_, seqs, encoders::TokenSegment::kInfo);
  } else {
    info = ops::add_row(repeat_row(tape, enc_.placeholder_info, B), tape.param(enc_.seg_info));
    std::fill(info_len.begin(), info_len.end(), 1);
  }

  std::vector<std::vector<int>> caps;
  for (const SampleInput& s : batch) {
    std::vector<int> seq{textcodec::kSos};
    seq.insert(seq.end(), s.caption.begin(), s.caption.end());
    seq.insert(seq.end(), static_cast<std::size_t>(s.pad), textcodec::kPad);
    caps.push_back(std::move(seq));
  }
  Var caption = encoders::encode_tokens(tape, enc_, caps, encoders::TokenSegment::kCaption);

  // Table layout: image rows, location rows, info rows, caption rows; then reorder per sample.
  const Eigen::Index loc0 = B * k2, info0 = loc0 + B, cap0 = info0 + info.rows();
  std::vector<Eigen::Index> order;
  sample_offset.assign(batch.size(), 0);
  context_len.assign(batch.size(), 0);
  Eigen::Index info_cursor = info0, cap_cursor = cap0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto bi = static_cast<Eigen::Index>(b);
    sample_offset[b] = static_cast<Eigen::Index>(order.size());
    for (Eigen::Index c = 0; c < k2; ++c) order.push_back(bi * k2 + c);
    order.push_back(loc0 + bi);
    for (Eigen::Index i = 0; i < info_len[b]; ++i) order.push_back(info_cursor++);
    context_len[b] = k2 + 1 + info_len[b];
    for (int i = 0; i < batch[b].caption_rows(); ++i) order.push_back(cap_cursor++);
  }
  const Var parts[] = {image, location, info, caption};
  Var seq = ops::gather_rows(ops::concat_rows(parts), order);
  return seq;
}

Var CaptionModel::run_blocks(Tape& tape, Var x, std::span<const SampleInput> batch,
                             const std::vector<Eigen::Index>& sample_offset,
                             const std::vector<Eigen::Index>& context_len, MaskMode mode) {
  std::map<std::tuple<Eigen::Index, int, int>, BoolMatrix> masks;
  std::vector<AttentionSegment> segs;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const int cap = 1 + static_cast<int>(batch[b].caption.size());
    const int total = static_cast<int>(context_len[b]) + batch[b].caption_rows();
    const auto key = std::make_tuple(context_len[b], cap, total);
    auto it = masks.find(key);
    if (it == masks.end())
      it = masks.emplace(key, build_attention_mask(static_cast<int>(context_len[b]), cap, total, mode)).first;
    segs.push_back({sample_offset[b], total, &it->second});
  }
  check_finite(x.value(), "embedding");
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    BlockParams& p = blocks_[l];
    Var h = ops::layer_norm(x, tape.param(p.ln1_g), tape.param(p.ln1_b));
    Var qkv = ops::linear(h, tape.param(p.w_qkv), tape.param(p.b_qkv));
    Var att = ops::attention(qkv, segs, cfg_.heads);
    x = ops::add(x, ops::linear(att, tape.param(p.w_o), tape.param(p.b_o)));
    Var h2 = ops::layer_norm(x, tape.param(p.ln2_g), tape.param(p.ln2_b));
    Var ff = ops::linear(ops::gelu(ops::linear(h2, tape.param(p.w_ff1), tape.param(p.b_ff1))),
                         tape.param(p.w_ff2), tape.param(p.b_ff2));
    x = ops::add(x, ff);
    check_finite(x.value(), "block " + std::to_string(l));
  }
  return ops::layer_norm(x, tape.param(lnf_g_), tape.param(lnf_b_));
}

ForwardResult CaptionModel::forward(Tape& tape, std::span<const SampleInput> batch, MaskMode mode) {
  if (batch.empty()) throw std::invalid_argument("forward: empty batch");
  std::vector<Eigen::Index> offset, context;
  Var x = embed(tape, batch, offset, context);
  Var h = run_blocks(tape, x, batch, offset, context, mode);

  ForwardResult r;
  std::vector<Eigen::Index> cap_rows, sos_rows;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Eigen::Index start = offset[b] + context[b];
    r.caption_offset.push_back(static_cast<Eigen::Index>(cap_rows.size()));
    r.caption_length.push_back(batch[b].caption_rows());
    sos_rows.push_back(start);
    for (int i = 0; i < batch[b].caption_rows(); ++i) cap_rows.push_back(start + i);
  }
  r.logits = ops::linear(ops::gather_rows(h, cap_rows), tape.param(cg_w_), tape.param(cg_b_));
  r.match_logit = ops::linear(ops::gather_rows(h, sos_rows), tape.param(cm_w_), tape.param(cm_b_));
  check_finite(r.logits.value(), "caption head");
  check_finite(r.match_logit.value(), "matching head");
  return r;
}

Matrix CaptionModel::hidden_states(std::span<const SampleInput> batch, MaskMode mode) {
  Tape tape;
  std::vector<Eigen::Index> offset, context;
  Var x = embed(tape, batch, offset, context);
  return run_blocks(tape, x, batch, offset, context, mode).value();
}

Var cg_loss(const Var& logits, std::span<const std::vector<int>> targets) {
  if (targets.empty()) throw std::invalid_argument("cg_loss: empty batch");
  std::vector<int> flat;
  std::vector<double> w;
  const double per_sample = 1.0 / static_cast<double>(targets.size());
  for (std::size_t b = 0; b < targets.size(); ++b) {
    std::size_t valid = 0;
    for (int t : targets[b]) valid += t >= 0 ? 1 : 0;
    if (valid == 0) throw std::invalid_argument("cg_loss: sample " + std::to_string(b) + " has every position padded");
    for (int t : targets[b]) {
      flat.push_back(t);
      w.push_back(t >= 0 ? per_sample / static_cast<double>(valid) : 0.0);
    }
  }
  if (static_cast<Eigen::Index>(flat.size()) != logits.rows())
    throw std::invalid_argument("cg_loss: targets cover " + std::to_string(flat.size()) + " rows, logits have " +
                                std::to_string(logits.rows()));
  for (int t : flat)
    if (t >= logits.cols()) throw std::invalid_argument("cg_loss: target id out of vocabulary");
  return ops::softmax_cross_entropy(logits, flat, w);
}

double cg_loss(const Matrix& logits, std::span<const std::vector<int>> targets) {
  Tape tape;
  return cg_loss(tape.constant(logits), targets).scalar();
}

Var cm_loss(const Var& match_logit, std::span<const int> labels) {
  if (labels.empty()) throw std::invalid_argument("cm_loss: empty batch");
  std::vector<double> r, w(labels.size(), 1.0 / static_cast<double>(labels.size()));
  for (int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("cm_loss: labels must be 0 or 1");
    r.push_back(l);
  }
  return ops::sigmoid_bce(match_logit, r, w);
}

double cm_loss(std::span<const double> scores, std::span<const int> labels) {
  if (scores.empty() || scores.size() != labels.size())
    throw std::invalid_argument("cm_loss: scores and labels must be non-empty and aligned");
  constexpr double eps = 1e-7;
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = std::clamp(scores[i], eps, 1.0 - eps);
    sum += labels[i] == 1 ? -std::log(s) : -std::log(1.0 - s);
  }
  return sum / static_cast<double>(scores.size());
}

CardContext prepare_card(const dataio::Card& card, const textcodec::Vocabulary& vocab, const ModelConfig& cfg) {
  const std::vector<dataio::TextBox> boxes = card.boxes();
  CardContext ctx;
  ctx.cells = std::make_shared<const Matrix>(
      encoders::pool_cells(dataio::mask_text_pixels(card.image, boxes), cfg.grid));
  ctx.info = vocab.encode(card.info);
  if (ctx.info.size() > static_cast<std::size_t>(cfg.max_info_len)) ctx.info.resize(static_cast<std::size_t>(cfg.max_info_len));
  return ctx;
}

std::vector<int> encode_caption(const std::string& caption, const textcodec::Vocabulary& vocab,
                                const ModelConfig& cfg) {
  std::vector<int> ids = vocab.encode(caption);
  if (ids.size() > static_cast<std::size_t>(cfg.max_caption_len)) ids.resize(static_cast<std::size_t>(cfg.max_caption_len));
  return ids;
}

SampleInput make_sample(const CardContext& ctx, const dataio::Card& card, std::size_t box,
                        std::vector<int> caption, const ModelConfig& cfg, std::mt19937_64* rng) {
  const std::vector<dataio::TextBox> boxes = card.boxes();
  SampleInput s;
  s.cells = ctx.cells;
  s.location = encoders::make_location_query(cfg.neighbors, boxes, box, rng);
  s.info = ctx.info;
  s.caption = std::move(caption);
  return s;
}

}  // namespace boxcap::net
