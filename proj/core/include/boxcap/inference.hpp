#pragma once

// Caption generation for the boxes of a card. The image is masked with every box of
// the layout and neighbor context always comes from the complete layout.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "boxcap/dataio.hpp"
#include "boxcap/net.hpp"
#include "boxcap/textcodec.hpp"

namespace boxcap::inference {

struct DecodeOptions {
  /// Upper bound on generated tokens (EOS excluded); also capped by the model's max_caption_len.
  int max_len = 10;
  /// 1 is greedy decoding.
  int beam = 1;
  /// Prompts decoded together in one forward pass.
  int batch = 64;
};

/// Decodes one caption per prompt (prompt captions are ignored). Beam hypotheses are
/// ranked by mean log-probability; ties go to the smaller token id, then the earlier
/// hypothesis. EOS is not allowed as the first token, PAD and SOS never.
std::vector<std::vector<int>> decode(net::CaptionModel& model, std::span<const net::SampleInput> prompts,
                                     const DecodeOptions& opts);

std::string generate(net::CaptionModel& model, const textcodec::Vocabulary& vocab, const dataio::Card& card,
                     std::size_t box, const DecodeOptions& opts = {});

/// One caption per box, in box order.
std::vector<std::string> generate_card(net::CaptionModel& model, const textcodec::Vocabulary& vocab,
                                       const dataio::Card& card, const DecodeOptions& opts = {});

/// generate_card over many cards, batching prompts across cards.
std::vector<std::vector<std::string>> generate_cards(net::CaptionModel& model, const textcodec::Vocabulary& vocab,
                                                     std::span<const dataio::Card> cards,
                                                     const DecodeOptions& opts = {});

/// Neighbor slots of box i for inference; random2 draws from a stream keyed by card id and box.
std::vector<net::SampleInput> card_prompts(const net::CardContext& ctx, const dataio::Card& card,
                                           const ModelConfig& cfg);

struct Prediction {
  std::string id;
  std::vector<dataio::TextBox> boxes;
  std::vector<std::string> captions;
};

/// One JSON object per line: {"id", "boxes": [[x_min, y_min, x_max, y_max], ...], "captions"}.
void write_predictions(std::span<const Prediction> preds, const std::filesystem::path& path);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

}  // namespace boxcap::inference
