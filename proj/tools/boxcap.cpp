// boxcap command-line tool: synth, train, finetune, generate, eval, render, schedule-dump, stats.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "boxcap/checkpoint.hpp"
#include "boxcap/curriculum.hpp"
#include "boxcap/dataio.hpp"
#include "boxcap/evalsuite.hpp"
#include "boxcap/inference.hpp"
#include "boxcap/render.hpp"
#include "boxcap/synth.hpp"
#include "boxcap/trainer.hpp"

namespace fs = std::filesystem;
using namespace boxcap;

namespace {

struct Ablation {
  bool no_location = false;
  bool no_info = false;
  bool no_image = false;
  std::string neighbors;

  void add_to(CLI::App* app) {
    app->add_flag("--no-location", no_location, "Replace the location token with a learned placeholder");
    app->add_flag("--no-info", no_info, "Replace product info with a learned placeholder");
    app->add_flag("--no-image", no_image, "Replace image features with a learned placeholder");
    app->add_option("--neighbors", neighbors, "Neighbor context: 0, random2, top1 or top2")
        ->check(CLI::IsMember({"0", "random2", "top1", "top2"}));
  }
  void apply(ModelConfig& m) const {
    if (no_location) m.use_location = false;
    if (no_info) m.use_info = false;
    if (no_image) m.use_image = false;
    if (!neighbors.empty()) m.neighbors = neighbor_mode_from_string(neighbors);
  }
};

std::vector<dataio::Card> load_cards(const fs::path& p) { return dataio::load_dataset(p, dataio::Split::kTrain).cards; }

void print_run(const std::vector<trainer::LossRecord>& log) {
  if (log.empty()) {
    std::cout << "nothing to do: already at the configured step count\n";
    return;
  }
  const auto& last = log.back();
  std::cout << "trained to step " << last.step << " (last " << trainer::to_string(last.task) << " loss " << last.loss
            << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  boxcap::tune_allocator();
  CLI::App app{"Box-conditioned caption generation: data synthesis, training, generation and evaluation"};
  app.require_subcommand(1);

  // synth
  std::size_t synth_n = 0;
  std::uint64_t synth_seed = 1;
  fs::path synth_out;
  std::string synth_split = "train";
  bool synth_inline = false;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  synth->add_option("--n", synth_n, "Number of cards")->required()->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--out", synth_out, "Output dataset file (JSON lines)")->required();
  synth->add_option("--split", synth_split, "Split tag")->check(CLI::IsMember({"train", "valid", "test"}));
  synth->add_flag("--inline-images", synth_inline, "Embed pixels in the records instead of writing PNG files");

  // train
  fs::path train_cfg, train_data, train_out, train_resume;
  Ablation train_abl;
  auto* train = app.add_subcommand("train", "Pre-train with caption generation and caption matching");
  train->add_option("--config", train_cfg, "key=value config file")->required()->check(CLI::ExistingFile);
  train->add_option("--data", train_data, "Training dataset")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Output directory (loss.csv, model.ckpt)")->required();
  train->add_option("--resume", train_resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  train_abl.add_to(train);

  // finetune
  fs::path ft_cfg, ft_ckpt, ft_data, ft_out;
  auto* finetune = app.add_subcommand("finetune", "Fine-tune a checkpoint with caption generation only");
  finetune->add_option("--config", ft_cfg, "key=value config file (training keys are used)")->required()->check(CLI::ExistingFile);
  finetune->add_option("--checkpoint", ft_ckpt, "Starting checkpoint")->required()->check(CLI::ExistingFile);
  finetune->add_option("--data", ft_data, "Training dataset")->required()->check(CLI::ExistingFile);
  finetune->add_option("--out", ft_out, "Output directory")->required();

  // generate
  fs::path gen_ckpt, gen_data, gen_out;
  int gen_beam = 1, gen_max_len = 10;
  auto* generate = app.add_subcommand("generate", "Generate captions for every box of a dataset");
  generate->add_option("--checkpoint", gen_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  generate->add_option("--data", gen_data, "Dataset with box layouts")->required()->check(CLI::ExistingFile);
  generate->add_option("--out", gen_out, "Prediction file (JSON lines)")->required();
  generate->add_option("--beam", gen_beam, "Beam width; 1 is greedy")->check(CLI::PositiveNumber);
  generate->add_option("--max-len", gen_max_len, "Maximum generated tokens")->check(CLI::PositiveNumber);

  // eval
  fs::path ev_pred, ev_ref, ev_out, ev_ckpt;
  auto* eval = app.add_subcommand("eval", "Score predictions against references");
  eval->add_option("--predictions", ev_pred, "Prediction file")->required()->check(CLI::ExistingFile);
  eval->add_option("--references", ev_ref, "Reference dataset")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", ev_out, "Report file")->required();
  eval->add_option("--checkpoint", ev_ckpt, "Checkpoint whose word embeddings cluster the reference captions")
      ->check(CLI::ExistingFile);

  // render
  fs::path rd_data, rd_pred, rd_out;
  std::string rd_card;
  auto* render = app.add_subcommand("render", "Draw captions into their boxes on a card image");
  render->add_option("--data", rd_data, "Dataset holding the card")->required()->check(CLI::ExistingFile);
  render->add_option("--card", rd_card, "Card id")->required();
  render->add_option("--predictions", rd_pred, "Prediction file to draw (default: reference captions)")
      ->check(CLI::ExistingFile);
  render->add_option("--out", rd_out, "Output PNG")->required();

  // schedule-dump
  std::int64_t sd_max = 0, sd_every = 1;
  fs::path sd_out;
  auto* sched = app.add_subcommand("schedule-dump", "Write the negative-level schedule as step,p1,p2,p3 rows");
  sched->add_option("--max-step", sd_max, "Last step")->required()->check(CLI::PositiveNumber);
  sched->add_option("--every", sd_every, "Row interval")->check(CLI::PositiveNumber);
  sched->add_option("--out", sd_out, "Output CSV")->required();

  // stats
  fs::path st_data;
  auto* stats = app.add_subcommand("stats", "Caption length and captions-per-card histograms");
  stats->add_option("--data", st_data, "Dataset")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const auto data = synth::synth_cards(synth_n, synth_seed, dataio::split_from_string(synth_split));
      if (synth_out.has_parent_path()) fs::create_directories(synth_out.parent_path());
      dataio::SaveOptions opts;
      opts.storage = synth_inline ? dataio::ImageStorage::kInline : dataio::ImageStorage::kPngFiles;
      dataio::save_dataset(data, synth_out, opts);
      std::cout << "wrote " << data.cards.size() << " cards to " << synth_out << "\n";
    } else if (*train) {
      trainer::RunConfig cfg = trainer::load_run_config(train_cfg);
      train_abl.apply(cfg.model);
      auto cards = load_cards(train_data);
      std::unique_ptr<trainer::Trainer> t;
      if (!train_resume.empty()) {
        const net::Checkpoint ck = net::load_checkpoint(train_resume);
        ModelConfig expect = cfg.model;
        expect.vocab = ck.model.vocab;
        if (!(expect == ck.model))
          throw std::invalid_argument("--resume: checkpoint model settings differ from the config and flags");
        t = std::make_unique<trainer::Trainer>(ck, cfg.train, trainer::Mode::kPretrain, true);
        std::cout << "resuming at step " << t->current_step() << "\n";
      } else {
        t = std::make_unique<trainer::Trainer>(cfg, trainer::build_vocabulary(cards), trainer::Mode::kPretrain);
      }
      t->set_data(std::move(cards));
      print_run(t->run(train_out));
    } else if (*finetune) {
      const trainer::RunConfig cfg = trainer::load_run_config(ft_cfg);
      const net::Checkpoint ck = net::load_checkpoint(ft_ckpt);
      trainer::Trainer t(ck, cfg.train, trainer::Mode::kFinetune, false);
      t.set_data(load_cards(ft_data));
      print_run(t.run(ft_out));
    } else if (*generate) {
      const net::Checkpoint ck = net::load_checkpoint(gen_ckpt);
      auto model = trainer::model_from_checkpoint(ck);
      const auto vocab = textcodec::Vocabulary::from_tokens(ck.vocab);
      const auto cards = load_cards(gen_data);
      inference::DecodeOptions opts;
      opts.beam = gen_beam;
      opts.max_len = gen_max_len;
      const auto caps = inference::generate_cards(*model, vocab, cards, opts);
      std::vector<inference::Prediction> preds;
      for (std::size_t i = 0; i < cards.size(); ++i) preds.push_back({cards[i].id, cards[i].boxes(), caps[i]});
      inference::write_predictions(preds, gen_out);
      std::size_t n = 0;
      for (const auto& c : caps) n += c.size();
      std::cout << "wrote " << n << " captions for " << cards.size() << " cards to " << gen_out << "\n";
    } else if (*eval) {
      const auto preds = inference::read_predictions(ev_pred);
      const auto refs = load_cards(ev_ref);
      std::map<std::string, const inference::Prediction*> by_id;
      for (const auto& p : preds) {
        if (!by_id.emplace(p.id, &p).second) throw std::invalid_argument("duplicate card id in predictions: " + p.id);
      }
      std::vector<std::vector<std::string>> pc, rc;
      std::vector<std::vector<dataio::TextBox>> boxes;
      for (const auto& c : refs) {
        auto it = by_id.find(c.id);
        if (it == by_id.end()) throw std::invalid_argument("no prediction for card id " + c.id);
        if (it->second->captions.size() != c.items.size())
          throw std::invalid_argument("card " + c.id + ": " + std::to_string(it->second->captions.size()) +
                                      " predicted captions for " + std::to_string(c.items.size()) + " boxes");
        pc.push_back(it->second->captions);
        rc.push_back(c.captions());
        boxes.push_back(c.boxes());
        by_id.erase(it);
      }
      if (!by_id.empty()) throw std::invalid_argument("prediction for unknown card id " + by_id.begin()->first);
      evalsuite::MetricReport report = evalsuite::evaluate(pc, rc, boxes);
      if (!ev_ckpt.empty()) {
        const net::Checkpoint ck = net::load_checkpoint(ev_ckpt);
        auto model = trainer::model_from_checkpoint(ck);
        const auto vocab = textcodec::Vocabulary::from_tokens(ck.vocab);
        std::vector<std::string> caps;
        std::vector<dataio::TextBox> flat;
        for (std::size_t i = 0; i < rc.size(); ++i) {
          caps.insert(caps.end(), rc[i].begin(), rc[i].end());
          flat.insert(flat.end(), boxes[i].begin(), boxes[i].end());
        }
        report.clusters = evalsuite::cluster_types(caps, flat, model->encoder().word.value, vocab, 4, 1,
                                                   model->config().grid);
      }
      evalsuite::write_report(report, ev_out);
      std::cout << "B@1=" << report.bleu1 << " B@4=" << report.bleu4 << " CIDEr=" << report.cider
                << " D@1=" << report.div1 << " D@2=" << report.div2 << "\n";
    } else if (*render) {
      const auto cards = load_cards(rd_data);
      const dataio::Card* card = nullptr;
      for (const auto& c : cards)
        if (c.id == rd_card) card = &c;
      if (!card) throw std::invalid_argument("card id " + rd_card + " not found in " + rd_data.string());
      std::vector<std::string> caps = card->captions();
      if (!rd_pred.empty()) {
        caps.clear();
        bool found = false;
        for (const auto& p : inference::read_predictions(rd_pred))
          if (p.id == rd_card) {
            caps = p.captions;
            found = true;
          }
        if (!found) throw std::invalid_argument("card id " + rd_card + " not found in " + rd_pred.string());
      }
      const auto boxes = card->boxes();
      write_png(render::render_captions(card->image, boxes, caps), rd_out);
      std::cout << "wrote " << rd_out << "\n";
    } else if (*sched) {
      std::ofstream os(sd_out, std::ios::trunc);
      if (!os) throw std::runtime_error("cannot write " + sd_out.string());
      os << "step,p1,p2,p3\n";
      char buf[128];
      for (std::int64_t s = 1; s <= sd_max; s += sd_every) {
        const auto p = curriculum::schedule(s);
        std::snprintf(buf, sizeof(buf), "%lld,%.9f,%.9f,%.9f\n", static_cast<long long>(s), p.p1, p.p2, p.p3);
        os << buf;
      }
    } else if (*stats) {
      const auto cards = load_cards(st_data);
      const auto s = dataio::dataset_stats(cards);
      std::cout << "cards=" << cards.size() << "\n";
      std::cout << "captions_per_card_mean=" << s.captions_per_image.mean << "\n";
      std::cout << "caption_length_mean=" << s.caption_length.mean << "\n";
      for (const auto& [k, v] : s.caption_length.counts) std::cout << "caption_length[" << k << "]=" << v << "\n";
      for (const auto& [k, v] : s.captions_per_image.counts) std::cout << "captions_per_card[" << k << "]=" << v << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
