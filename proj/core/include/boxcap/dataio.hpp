#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "boxcap/image.hpp"

namespace boxcap::dataio {

inline constexpr std::size_t kMinCaptionUnits = 2;
inline constexpr std::size_t kMaxCaptionUnits = 10;
inline constexpr double kMaskValue = 0.5;
inline constexpr double kDefaultOverlapThreshold = 0.9;

/// Normalized rectangle, coordinates relative to image width/height.
struct TextBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }
  double top_left_sum() const { return x_min + y_min; }
  /// Long side over short side; >= 1 for valid boxes.
  double aspect_ratio() const;
  bool valid() const;

  bool operator==(const TextBox&) const = default;
};

struct Item {
  TextBox box;
  std::string caption;
};

struct Card {
  std::string id;
  Image image;
  std::string info;
  std::vector<Item> items;
  int category = 0;

  std::vector<TextBox> boxes() const;
  std::vector<std::string> captions() const;
};

enum class Split { kTrain, kValid, kTest };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct DatasetSplit {
  Split split = Split::kTrain;
  std::vector<Card> cards;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& field, const std::string& message);
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Checks every Card invariant; returns an empty string when valid, else the first violation.
std::string validate_card(const Card& card);

/// Reads one Card per line. Relative image paths resolve against the file's directory.
DatasetSplit load_dataset(const std::filesystem::path& path, Split split);

enum class ImageStorage { kInline, kPngFiles };

struct SaveOptions {
  ImageStorage storage = ImageStorage::kPngFiles;
  /// Directory for PNG files, relative to the dataset file; default "<stem>_images".
  std::string image_dir;
};

void save_dataset(const DatasetSplit& data, const std::filesystem::path& path,
                  const SaveOptions& options = {});

/// Drops captions whose unit count is outside [2, 10], then cards left with < 2 captions.
std::vector<Card> filter_captions(std::vector<Card> cards);

/// Keeps a card only if, against every earlier kept card, the number of shared caption
/// strings divided by the smaller caption count stays below the threshold.
std::vector<Card> dedup_cards(std::vector<Card> cards, double overlap_threshold = kDefaultOverlapThreshold);

/// Pixel rectangle covered by a normalized box: [x0, x1) x [y0, y1) with edges rounded.
struct PixelRect {
  int x0, y0, x1, y1;
};
PixelRect rasterize(const TextBox& box, int width, int height);

/// Paints every box area with kMaskValue gray.
Image mask_text_pixels(Image image, std::span<const TextBox> boxes);

struct Histogram {
  std::map<std::size_t, std::size_t> counts;
  double mean = 0.0;
};

struct DatasetStats {
  Histogram caption_length;
  Histogram captions_per_image;
};

DatasetStats dataset_stats(std::span<const Card> cards);

}  // namespace boxcap::dataio
