#pragma once

// The multimodal transformer. Every sample is laid out as
//
//   [ image (k*k) | location (1) | info (n_info) | SOS caption... | PAD... ]
//
// and samples are packed one after another along the row axis; attention never
// crosses a sample boundary. Context rows attend bidirectionally among
// themselves, caption rows attend to the whole context and causally to the
// caption, padding rows take part in nothing.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "boxcap/autograd.hpp"
#include "boxcap/dataio.hpp"
#include "boxcap/encoders.hpp"
#include "boxcap/model_config.hpp"
#include "boxcap/textcodec.hpp"

namespace boxcap::net {

enum class MaskMode {
  kGeneration,  // caption rows are causal
  kMatching,    // caption rows see the whole caption (used when scoring a complete caption)
};

/// total_len defaults to context_len + caption_len; rows beyond that are padding.
BoolMatrix build_attention_mask(int context_len, int caption_len, int total_len = -1,
                                MaskMode mode = MaskMode::kGeneration);

struct SampleInput {
  /// Pooled cells of the masked image (k*k x kCellFeatures); must outlive the forward pass.
  std::shared_ptr<const Matrix> cells;
  encoders::LocationQuery location;
  std::vector<int> info;
  /// Caption tokens without SOS/EOS. The caption segment is SOS followed by these.
  std::vector<int> caption;
  /// PAD rows appended after the caption segment.
  int pad = 0;

  int caption_rows() const { return 1 + static_cast<int>(caption.size()) + pad; }
};

/// Per caption row the token it should predict: caption[t] for t < len, EOS at t = len,
/// and -1 for padding rows.
std::vector<int> caption_targets(const SampleInput& s);

struct ForwardResult {
  /// Caption-segment rows of every sample, stacked in sample order (sum caption_rows x V).
  Var logits;
  /// Pre-sigmoid match score read from each SOS row (B x 1).
  Var match_logit;
  std::vector<Eigen::Index> caption_offset;
  std::vector<Eigen::Index> caption_length;

  /// Row block of sample b in `logits`.
  Matrix sample_logits(std::size_t b) const;
  /// sigmoid(match_logit).
  std::vector<double> match_scores() const;
};

struct BlockParams {
  Parameter ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_ff1, b_ff1, w_ff2, b_ff2;
};

class CaptionModel {
 public:
  CaptionModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  encoders::EncoderParams& encoder() { return enc_; }
  const encoders::EncoderParams& encoder() const { return enc_; }

  /// Every trainable tensor in a fixed order.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;

  /// Throws NumericalError naming the stage if any activation is not finite.
  ForwardResult forward(Tape& tape, std::span<const SampleInput> batch, MaskMode mode);

  /// Hidden states after the final norm for the whole packed sequence (for diagnostics/tests).
  Matrix hidden_states(std::span<const SampleInput> batch, MaskMode mode);

 private:
  Var embed(Tape& tape, std::span<const SampleInput> batch, std::vector<Eigen::Index>& sample_offset,
            std::vector<Eigen::Index>& context_len);
  Var run_blocks(Tape& tape, Var x, std::span<const SampleInput> batch,
                 const std::vector<Eigen::Index>& sample_offset,
                 const std::vector<Eigen::Index>& context_len, MaskMode mode);

  ModelConfig cfg_;
  encoders::EncoderParams enc_;
  std::vector<BlockParams> blocks_;
  Parameter lnf_g_, lnf_b_;
  Parameter cg_w_, cg_b_;
  Parameter cm_w_, cm_b_;
};

/// Mean over non-pad steps of -log p(target), then mean over samples. logits rows are
/// the concatenation of per-sample blocks sized like `targets`; target -1 marks padding.
Var cg_loss(const Var& logits, std::span<const std::vector<int>> targets);
double cg_loss(const Matrix& logits, std::span<const std::vector<int>> targets);

/// Binary cross-entropy of sigmoid(match_logit) against labels, averaged over the batch.
Var cm_loss(const Var& match_logit, std::span<const int> labels);
/// Same on probabilities, clipped to [1e-7, 1 - 1e-7].
double cm_loss(std::span<const double> scores, std::span<const int> labels);

/// Per-card inputs shared by every box on the card.
struct CardContext {
  std::shared_ptr<const Matrix> cells;
  std::vector<int> info;
};

/// Masks every box on the image, pools cells and encodes (truncated) info.
CardContext prepare_card(const dataio::Card& card, const textcodec::Vocabulary& vocab,
                         const ModelConfig& cfg);

/// Token ids of a caption string, truncated to max_caption_len.
std::vector<int> encode_caption(const std::string& caption, const textcodec::Vocabulary& vocab,
                                const ModelConfig& cfg);

/// A sample for box i of a card. rng is required for random2 neighbors.
SampleInput make_sample(const CardContext& ctx, const dataio::Card& card, std::size_t box,
                        std::vector<int> caption, const ModelConfig& cfg,
                        std::mt19937_64* rng = nullptr);

}  // namespace boxcap::net
