#include "boxcap/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace boxcap::inference {
namespace {

struct Hyp {
  std::vector<int> tokens;
  double logprob = 0.0;
};

struct Candidate {
  double score;
  int token;
  std::size_t hyp;
  double logprob;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.token != b.token) return a.token < b.token;
  return a.hyp < b.hyp;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Log-softmax of one logits row.
Eigen::VectorXd log_probs(const Matrix& logits, Eigen::Index row) {
  const auto z = logits.row(row);
  const double mx = z.maxCoeff();
  const double lse = mx + std::log((z.array() - mx).exp().sum());
  return (z.array() - lse).transpose();
}

struct PromptState {
  std::vector<Hyp> live;
  bool done = false;
  bool have_best = false;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<int> best;

  void finish(std::vector<int> tokens, double logprob, std::size_t length) {
    const double score = logprob / static_cast<double>(length);
    if (!have_best || score > best_score) {
      have_best = true;
      best_score = score;
      best = std::move(tokens);
    }
  }
};

}  // namespace

std::vector<std::vector<int>> decode(net::CaptionModel& model, std::span<const net::SampleInput> prompts,
                                     const DecodeOptions& opts) {
  if (opts.beam < 1) throw std::invalid_argument("decode: beam width must be at least 1");
  if (opts.max_len < 1) throw std::invalid_argument("decode: max_len must be at least 1");
  if (opts.batch < 1) throw std::invalid_argument("decode: batch must be at least 1");
  const int max_len = std::min(opts.max_len, model.config().max_caption_len);
  const auto beam = static_cast<std::size_t>(opts.beam);

  std::vector<std::vector<int>> out(prompts.size());
  for (std::size_t start = 0; start < prompts.size(); start += static_cast<std::size_t>(opts.batch)) {
    const std::size_t end = std::min(prompts.size(), start + static_cast<std::size_t>(opts.batch));
    std::vector<PromptState> state(end - start);
    for (auto& s : state) s.live.push_back({});

    for (int t = 0; t < max_len; ++t) {
      std::vector<net::SampleInput> batch;
      std::vector<std::pair<std::size_t, std::size_t>> owner;  // (prompt, hyp)
      for (std::size_t p = 0; p < state.size(); ++p) {
        if (state[p].done) continue;
        for (std::size_t h = 0; h < state[p].live.size(); ++h) {
          net::SampleInput s = prompts[start + p];
          s.caption = state[p].live[h].tokens;
          s.pad = 0;
          batch.push_back(std::move(s));
          owner.emplace_back(p, h);
        }
      }
      if (batch.empty()) break;
      Tape tape;
      const net::ForwardResult r = model.forward(tape, batch, net::MaskMode::kGeneration);
      const Matrix& logits = r.logits.value();

      std::vector<std::vector<Candidate>> cands(state.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto [p, h] = owner[i];
        const Hyp& hyp = state[p].live[h];
        const Eigen::VectorXd lp = log_probs(logits, r.caption_offset[i] + static_cast<Eigen::Index>(hyp.tokens.size()));
        const double len = static_cast<double>(hyp.tokens.size() + 1);
        std::vector<Candidate> mine;
        for (Eigen::Index w = 0; w < lp.size(); ++w) {
          if (w == textcodec::kPad || w == textcodec::kSos) continue;
          if (w == textcodec::kEos && hyp.tokens.empty()) continue;
          const double total = hyp.logprob + lp(w);
          mine.push_back({total / len, static_cast<int>(w), h, total});
        }
        const std::size_t keep = std::min(beam, mine.size());
        std::partial_sort(mine.begin(), mine.begin() + static_cast<std::ptrdiff_t>(keep), mine.end(), better);
        cands[p].insert(cands[p].end(), mine.begin(), mine.begin() + static_cast<std::ptrdiff_t>(keep));
      }

      for (std::size_t p = 0; p < state.size(); ++p) {
        PromptState& st = state[p];
        if (st.done) continue;
        auto& cs = cands[p];
        std::sort(cs.begin(), cs.end(), better);
        if (cs.size() > beam) cs.resize(beam);
        std::vector<Hyp> next;
        for (const Candidate& c : cs) {
          const Hyp& parent = st.live[c.hyp];
          if (c.token == textcodec::kEos) {
            st.finish(parent.tokens, c.logprob, parent.tokens.size() + 1);
          } else {
            Hyp h{parent.tokens, c.logprob};
            h.tokens.push_back(c.token);
            next.push_back(std::move(h));
          }
        }
        st.live = std::move(next);
        if (st.live.empty()) st.done = true;
      }
    }
    for (std::size_t p = 0; p < state.size(); ++p) {
      PromptState& st = state[p];
      // Hypotheses that reached max_len without EOS are truncated there.
      for (Hyp& h : st.live) {
        const std::size_t n = h.tokens.size();
        st.finish(std::move(h.tokens), h.logprob, n);
      }
      out[start + p] = std::move(st.best);
    }
  }
  return out;
}

std::vector<net::SampleInput> card_prompts(const net::CardContext& ctx, const dataio::Card& card,
                                           const ModelConfig& cfg) {
  std::vector<net::SampleInput> prompts;
  for (std::size_t b = 0; b < card.items.size(); ++b) {
    std::mt19937_64 rng(fnv1a(card.id) ^ (0x9e3779b97f4a7c15ULL * (b + 1)));
    prompts.push_back(net::make_sample(ctx, card, b, {}, cfg, &rng));
  }
  return prompts;
}

std::string generate(net::CaptionModel& model, const textcodec::Vocabulary& vocab, const dataio::Card& card,
                     std::size_t box, const DecodeOptions& opts) {
  if (box >= card.items.size()) throw std::out_of_range("generate: box index out of range");
  const net::CardContext ctx = net::prepare_card(card, vocab, model.config());
  const std::vector<net::SampleInput> prompts = card_prompts(ctx, card, model.config());
  const auto ids = decode(model, std::span(&prompts[box], 1), opts);
  return vocab.decode(ids.front());
}

std::vector<std::string> generate_card(net::CaptionModel& model, const textcodec::Vocabulary& vocab,
                                       const dataio::Card& card, const DecodeOptions& opts) {
  return generate_cards(model, vocab, std::span(&card, 1), opts).front();
}

std::vector<std::vector<std::string>> generate_cards(net::CaptionModel& model, const textcodec::Vocabulary& vocab,
                                                     std::span<const dataio::Card> cards, const DecodeOptions& opts) {
  std::vector<net::SampleInput> prompts;
  for (const dataio::Card& c : cards) {
    const net::CardContext ctx = net::prepare_card(c, vocab, model.config());
    auto ps = card_prompts(ctx, c, model.config());
    prompts.insert(prompts.end(), std::make_move_iterator(ps.begin()), std::make_move_iterator(ps.end()));
  }
  const auto ids = decode(model, prompts, opts);
  std::vector<std::vector<std::string>> out;
  std::size_t k = 0;
  for (const dataio::Card& c : cards) {
    std::vector<std::string> caps;
    for (std::size_t b = 0; b < c.items.size(); ++b) caps.push_back(vocab.decode(ids[k++]));
    out.push_back(std::move(caps));
  }
  return out;
}

void write_predictions(std::span<const Prediction> preds, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write predictions " + path.string());
  for (const Prediction& p : preds) {
    if (p.boxes.size() != p.captions.size())
      throw std::invalid_argument("prediction " + p.id + ": boxes and captions differ in length");
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["boxes"] = nlohmann::json::array();
    for (const dataio::TextBox& b : p.boxes) j["boxes"].push_back({b.x_min, b.y_min, b.x_max, b.y_max});
    j["captions"] = p.captions;
    os << j.dump() << "\n";
  }
  if (!os) throw std::runtime_error("failed writing predictions " + path.string());
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read predictions " + path.string());
  std::vector<Prediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Prediction p;
      p.id = j.at("id").get<std::string>();
      for (const auto& b : j.at("boxes")) {
        if (b.size() != 4) throw std::invalid_argument("box needs 4 coordinates");
        p.boxes.push_back({b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()});
      }
      p.captions = j.at("captions").get<std::vector<std::string>>();
      if (p.boxes.size() != p.captions.size()) throw std::invalid_argument("boxes and captions differ in length");
      out.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw dataio::ParseError(lineno, "prediction", e.what());
    }
  }
  return out;
}

}  // namespace boxcap::inference
