#include "boxcap/model_config.hpp"

#include <stdexcept>

namespace boxcap {

std::string to_string(NeighborMode m) {
  switch (m) {
    case NeighborMode::kNone: return "0";
    case NeighborMode::kTop1: return "top1";
    case NeighborMode::kTop2: return "top2";
    case NeighborMode::kRandom2: return "random2";
  }
  return "top1";
}

NeighborMode neighbor_mode_from_string(const std::string& s) {
  if (s == "0" || s == "none") return NeighborMode::kNone;
  if (s == "top1") return NeighborMode::kTop1;
  if (s == "top2") return NeighborMode::kTop2;
  if (s == "random2") return NeighborMode::kRandom2;
  throw std::invalid_argument("neighbors: expected one of 0, top1, top2, random2 (got '" + s + "')");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("model config '" + field + "': " + why);
  };
  if (layers < 1) fail("layers", "must be at least 1");
  if (width < 2 || width % 2 != 0) fail("width", "must be a positive even number");
  if (heads < 1 || width % heads != 0) fail("heads", "must divide width");
  if (grid < 1) fail("grid", "must be at least 1");
  if (vocab < 6) fail("vocab", "must cover the special tokens plus at least one word");
  if (max_caption_len < 1) fail("max_caption_len", "must be at least 1");
  if (max_info_len < 1) fail("max_info_len", "must be at least 1");
}

namespace {

std::string bool_str(bool b) { return b ? "true" : "false"; }

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config key '" + key + "': expected true or false, got '" + v + "'");
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw std::invalid_argument("missing config key '" + key + "'");
  return it->second;
}

}  // namespace

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {
      {"layers", std::to_string(layers)},
      {"width", std::to_string(width)},
      {"heads", std::to_string(heads)},
      {"grid", std::to_string(grid)},
      {"vocab", std::to_string(vocab)},
      {"max_caption_len", std::to_string(max_caption_len)},
      {"max_info_len", std::to_string(max_info_len)},
      {"neighbors", to_string(neighbors)},
      {"use_image", bool_str(use_image)},
      {"use_info", bool_str(use_info)},
      {"use_location", bool_str(use_location)},
  };
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  c.layers = parse_int("layers", need(kv, "layers"));
  c.width = parse_int("width", need(kv, "width"));
  c.heads = parse_int("heads", need(kv, "heads"));
  c.grid = parse_int("grid", need(kv, "grid"));
  if (auto it = kv.find("vocab"); it != kv.end()) c.vocab = parse_int("vocab", it->second);
  c.max_caption_len = parse_int("max_caption_len", need(kv, "max_caption_len"));
  c.max_info_len = parse_int("max_info_len", need(kv, "max_info_len"));
  c.neighbors = neighbor_mode_from_string(need(kv, "neighbors"));
  c.use_image = parse_bool("use_image", need(kv, "use_image"));
  c.use_info = parse_bool("use_info", need(kv, "use_info"));
  c.use_location = parse_bool("use_location", need(kv, "use_location"));
  return c;
}

}  // namespace boxcap
