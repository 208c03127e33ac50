#include "boxcap/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "boxcap/textcodec.hpp"
#include "json.hpp"

namespace boxcap::dataio {

using json = nlohmann::ordered_json;

double TextBox::aspect_ratio() const {
  const double w = width(), h = height();
  return std::max(w, h) / std::min(w, h);
}

bool TextBox::valid() const {
  return 0.0 <= x_min && x_min < x_max && x_max <= 1.0 && 0.0 <= y_min && y_min < y_max &&
         y_max <= 1.0;
}

std::vector<TextBox> Card::boxes() const {
  std::vector<TextBox> out;
  out.reserve(items.size());
  for (const Item& it : items) out.push_back(it.box);
  return out;
}

std::vector<std::string> Card::captions() const {
  std::vector<std::string> out;
  out.reserve(items.size());
  for (const Item& it : items) out.push_back(it.caption);
  return out;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "valid") return Split::kValid;
  if (s == "test") return Split::kTest;
  throw std::invalid_argument("unknown split tag '" + s + "' (expected train, valid or test)");
}

ParseError::ParseError(std::size_t line, const std::string& field, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": field '" + field + "': " + message),
      line_(line), field_(field) {}

ValidationError::ValidationError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

std::string validate_card(const Card& card) {
  if (card.items.size() < 2)
    return "card has " + std::to_string(card.items.size()) + " captions; at least 2 are required";
  for (std::size_t i = 0; i < card.items.size(); ++i) {
    const TextBox& b = card.items[i].box;
    if (!b.valid()) {
      std::ostringstream os;
      os << "box " << i << " [" << b.x_min << ", " << b.y_min << ", " << b.x_max << ", " << b.y_max
         << "] is not a valid normalized rectangle (need 0 <= min < max <= 1)";
      return os.str();
    }
    const std::size_t n = textcodec::unit_count(card.items[i].caption);
    if (n < kMinCaptionUnits || n > kMaxCaptionUnits)
      return "caption " + std::to_string(i) + " has " + std::to_string(n) +
             " units; the length filter keeps captions of 2 to 10 units";
    for (std::size_t j = 0; j < i; ++j)
      if (card.items[j].box == b)
        return "boxes " + std::to_string(j) + " and " + std::to_string(i) + " are identical";
  }
  if (!card.image.empty()) {
    for (double v : card.image.data())
      if (!(v >= 0.0 && v <= 1.0)) return "image values must lie in [0, 1]";
  }
  return {};
}

namespace {

const json& field(const json& rec, const char* name, std::size_t line) {
  auto it = rec.find(name);
  if (it == rec.end()) throw ParseError(line, name, "missing");
  return *it;
}

Image parse_inline_image(const json& j, int height, int width, std::size_t line) {
  if (!j.is_array() || static_cast<int>(j.size()) != height)
    throw ParseError(line, "image", "inline image must be an array of " + std::to_string(height) + " rows");
  Image img(height, width);
  for (int y = 0; y < height; ++y) {
    const json& row = j[static_cast<std::size_t>(y)];
    if (!row.is_array() || static_cast<int>(row.size()) != width)
      throw ParseError(line, "image", "row " + std::to_string(y) + " must hold " + std::to_string(width) + " pixels");
    for (int x = 0; x < width; ++x) {
      const json& px = row[static_cast<std::size_t>(x)];
      if (!px.is_array() || px.size() != 3)
        throw ParseError(line, "image", "pixels must be [r, g, b] triples");
      for (int c = 0; c < 3; ++c) {
        const json& v = px[static_cast<std::size_t>(c)];
        if (!v.is_number_integer() || v.get<int>() < 0 || v.get<int>() > 255)
          throw ParseError(line, "image", "inline channel values must be integers in [0, 255]");
        img.at(y, x, c) = v.get<int>() / 255.0;
      }
    }
  }
  return img;
}

Card parse_record(const std::string& text, std::size_t line, const std::filesystem::path& base) {
  json rec;
  try {
    rec = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(line, "<record>", std::string("malformed JSON: ") + e.what());
  }
  if (!rec.is_object()) throw ParseError(line, "<record>", "record must be a JSON object");

  Card card;
  if (auto it = rec.find("id"); it != rec.end()) {
    if (!it->is_string()) throw ParseError(line, "id", "must be a string");
    card.id = it->get<std::string>();
  } else {
    card.id = std::to_string(line);
  }

  const json& w = field(rec, "width", line);
  const json& h = field(rec, "height", line);
  if (!w.is_number_integer() || w.get<int>() <= 0) throw ParseError(line, "width", "must be a positive integer");
  if (!h.is_number_integer() || h.get<int>() <= 0) throw ParseError(line, "height", "must be a positive integer");
  const int width = w.get<int>(), height = h.get<int>();

  const json& info = field(rec, "info", line);
  if (!info.is_string()) throw ParseError(line, "info", "must be a string");
  card.info = info.get<std::string>();

  const json& cat = field(rec, "category", line);
  if (!cat.is_number_integer()) throw ParseError(line, "category", "must be an integer");
  card.category = cat.get<int>();

  const json& boxes = field(rec, "boxes", line);
  const json& caps = field(rec, "captions", line);
  if (!boxes.is_array()) throw ParseError(line, "boxes", "must be an array");
  if (!caps.is_array()) throw ParseError(line, "captions", "must be an array");
  if (boxes.size() != caps.size())
    throw ParseError(line, "captions", "needs exactly one caption per box");
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const json& b = boxes[i];
    if (!b.is_array() || b.size() != 4 || !std::all_of(b.begin(), b.end(), [](const json& v) { return v.is_number(); }))
      throw ParseError(line, "boxes", "entry " + std::to_string(i) + " must be [x_min, y_min, x_max, y_max]");
    if (!caps[i].is_string()) throw ParseError(line, "captions", "entry " + std::to_string(i) + " must be a string");
    card.items.push_back({TextBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()},
                          caps[i].get<std::string>()});
  }

  const json& image = field(rec, "image", line);
  if (image.is_string()) {
    std::filesystem::path p = image.get<std::string>();
    if (p.is_relative()) p = base / p;
    try {
      card.image = read_png(p);
    } catch (const std::exception& e) {
      throw ParseError(line, "image", e.what());
    }
    if (card.image.width() != width || card.image.height() != height)
      throw ValidationError(line, "image " + p.string() + " is " + std::to_string(card.image.width()) + "x" +
                                      std::to_string(card.image.height()) + ", record says " +
                                      std::to_string(width) + "x" + std::to_string(height));
  } else {
    card.image = parse_inline_image(image, height, width, line);
  }

  if (std::string err = validate_card(card); !err.empty()) throw ValidationError(line, err);
  return card;
}

}  // namespace

DatasetSplit load_dataset(const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  DatasetSplit out;
  out.split = split;
  const std::filesystem::path base = path.parent_path();
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.cards.push_back(parse_record(text, line, base));
  }
  return out;
}

void save_dataset(const DatasetSplit& data, const std::filesystem::path& path, const SaveOptions& options) {
  std::filesystem::path image_dir_rel;
  if (options.storage == ImageStorage::kPngFiles) {
    image_dir_rel = options.image_dir.empty() ? path.stem().string() + "_images" : options.image_dir;
    std::filesystem::create_directories(path.parent_path() / image_dir_rel);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());

  for (std::size_t n = 0; n < data.cards.size(); ++n) {
    const Card& c = data.cards[n];
    json rec;
    rec["id"] = c.id;
    if (options.storage == ImageStorage::kPngFiles) {
      const std::string name = c.id.empty() ? "card_" + std::to_string(n) : c.id;
      const std::filesystem::path rel = image_dir_rel / (name + ".png");
      write_png(c.image, path.parent_path() / rel);
      rec["image"] = rel.generic_string();
    } else {
      json rows = json::array();
      for (int y = 0; y < c.image.height(); ++y) {
        json row = json::array();
        for (int x = 0; x < c.image.width(); ++x)
          row.push_back({to_byte(c.image.at(y, x, 0)), to_byte(c.image.at(y, x, 1)), to_byte(c.image.at(y, x, 2))});
        rows.push_back(std::move(row));
      }
      rec["image"] = std::move(rows);
    }
    rec["width"] = c.image.width();
    rec["height"] = c.image.height();
    rec["info"] = c.info;
    rec["category"] = c.category;
    json boxes = json::array(), caps = json::array();
    for (const Item& it : c.items) {
      boxes.push_back({it.box.x_min, it.box.y_min, it.box.x_max, it.box.y_max});
      caps.push_back(it.caption);
    }
    rec["boxes"] = std::move(boxes);
    rec["captions"] = std::move(caps);
    out << rec.dump() << '\n';
  }
  if (!out) throw std::runtime_error("error while writing " + path.string());
}

std::vector<Card> filter_captions(std::vector<Card> cards) {
  std::vector<Card> kept;
  kept.reserve(cards.size());
  for (Card& c : cards) {
    std::erase_if(c.items, [](const Item& it) {
      const std::size_t n = textcodec::unit_count(it.caption);
      return n < kMinCaptionUnits || n > kMaxCaptionUnits;
    });
    if (c.items.size() >= 2) kept.push_back(std::move(c));
  }
  return kept;
}

std::vector<Card> dedup_cards(std::vector<Card> cards, double overlap_threshold) {
  if (!(overlap_threshold > 0.0 && overlap_threshold <= 1.0))
    throw std::invalid_argument("dedup_cards: overlap threshold must lie in (0, 1]");
  std::vector<Card> kept;
  std::vector<std::size_t> kept_sizes;
  std::unordered_map<std::string, std::vector<std::size_t>> owners;  // caption -> kept card indices
  for (Card& c : cards) {
    std::set<std::string> mine;
    for (const Item& it : c.items) mine.insert(it.caption);
    std::unordered_map<std::size_t, std::size_t> shared;
    for (const std::string& s : mine)
      if (auto it = owners.find(s); it != owners.end())
        for (std::size_t k : it->second) ++shared[k];
    bool redundant = false;
    for (const auto& [k, count] : shared) {
      const double denom = static_cast<double>(std::min(c.items.size(), kept_sizes[k]));
      if (denom > 0 && static_cast<double>(count) / denom >= overlap_threshold) {
        redundant = true;
        break;
      }
    }
    if (redundant) continue;
    const std::size_t idx = kept.size();
    for (const std::string& s : mine) owners[s].push_back(idx);
    kept_sizes.push_back(c.items.size());
    kept.push_back(std::move(c));
  }
  return kept;
}

PixelRect rasterize(const TextBox& box, int width, int height) {
  auto edge = [](double c, int n) { return static_cast<int>(std::clamp<long>(std::lround(c * n), 0, n)); };
  return {edge(box.x_min, width), edge(box.y_min, height), edge(box.x_max, width), edge(box.y_max, height)};
}

Image mask_text_pixels(Image image, std::span<const TextBox> boxes) {
  for (const TextBox& b : boxes) {
    const PixelRect r = rasterize(b, image.width(), image.height());
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x) image.set_rgb(y, x, kMaskValue, kMaskValue, kMaskValue);
  }
  return image;
}

DatasetStats dataset_stats(std::span<const Card> cards) {
  if (cards.empty()) throw std::invalid_argument("dataset_stats: no cards");
  DatasetStats s;
  std::size_t captions = 0, units = 0;
  for (const Card& c : cards) {
    ++s.captions_per_image.counts[c.items.size()];
    captions += c.items.size();
    for (const Item& it : c.items) {
      const std::size_t n = textcodec::unit_count(it.caption);
      ++s.caption_length.counts[n];
      units += n;
    }
  }
  s.captions_per_image.mean = static_cast<double>(captions) / static_cast<double>(cards.size());
  s.caption_length.mean = captions ? static_cast<double>(units) / static_cast<double>(captions) : 0.0;
  return s;
}

}  // namespace boxcap::dataio
