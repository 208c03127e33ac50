#include "boxcap/render.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <stdexcept>

namespace boxcap::render {
namespace {

using Glyph = std::array<const char*, 7>;

// Letters are drawn in upper case; anything without a glyph becomes a hollow box.
const std::map<char, Glyph>& font() {
  static const std::map<char, Glyph> f = {
      {'A', {".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
      {'B', {"####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."}},
      {'C', {".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."}},
      {'D', {"####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."}},
      {'E', {"#####", "#....", "#....", "####.", "#....", "#....", "#####"}},
      {'F', {"#####", "#....", "#....", "####.", "#....", "#....", "#...."}},
      {'G', {".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"}},
      {'H', {"#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
      {'I', {".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."}},
      {'J', {"..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."}},
      {'K', {"#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"}},
      {'L', {"#....", "#....", "#....", "#....", "#....", "#....", "#####"}},
      {'M', {"#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"}},
      {'N', {"#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"}},
      {'O', {".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}},
      {'P', {"####.", "#...#", "#...#", "####.", "#....", "#....", "#...."}},
      {'Q', {".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"}},
      {'R', {"####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"}},
      {'S', {".####", "#....", "#....", ".###.", "....#", "....#", "####."}},
      {'T', {"#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."}},
      {'U', {"#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}},
      {'V', {"#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."}},
      {'W', {"#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."}},
      {'X', {"#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"}},
      {'Y', {"#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."}},
      {'Z', {"#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"}},
      {'0', {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."}},
      {'1', {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."}},
      {'2', {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"}},
      {'3', {"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."}},
      {'4', {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."}},
      {'5', {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."}},
      {'6', {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."}},
      {'7', {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."}},
      {'8', {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."}},
      {'9', {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."}},
      {' ', {".....", ".....", ".....", ".....", ".....", ".....", "....."}},
      {'-', {".....", ".....", ".....", "#####", ".....", ".....", "....."}},
      {'.', {".....", ".....", ".....", ".....", ".....", ".##..", ".##.."}},
      {'[', {".###.", ".#...", ".#...", ".#...", ".#...", ".#...", ".###."}},
      {']', {".###.", "...#.", "...#.", "...#.", "...#.", "...#.", ".###."}},
  };
  return f;
}

const Glyph kMissing = {"#####", "#...#", "#...#", "#...#", "#...#", "#...#", "#####"};

const Glyph& glyph(char c) {
  const auto& f = font();
  auto it = f.find(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return it == f.end() ? kMissing : it->second;
}

constexpr int kGlyphW = 5, kGlyphH = 7, kCellW = 6, kCellH = 8;

}  // namespace

Image render_captions(const Image& image, std::span<const dataio::TextBox> boxes,
                      std::span<const std::string> captions) {
  Image out = image;
  if (captions.empty()) return out;
  if (captions.size() != boxes.size())
    throw std::invalid_argument("render: " + std::to_string(captions.size()) + " captions for " +
                                std::to_string(boxes.size()) + " boxes");
  constexpr double kInk = 0.05;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const dataio::PixelRect r = dataio::rasterize(boxes[i], image.width(), image.height());
    const int bw = r.x1 - r.x0, bh = r.y1 - r.y0;
    if (bw <= 0 || bh <= 0) continue;
    const bool vertical = bh > bw;
    const int scale = std::max(1, std::min(bw, bh) / kCellH);
    // Non-ASCII bytes of one code point collapse into a single missing glyph.
    std::string text;
    for (std::size_t j = 0; j < captions[i].size(); ++j) {
      const auto c = static_cast<unsigned char>(captions[i][j]);
      if (c < 0x80) {
        text.push_back(static_cast<char>(c));
      } else if ((c & 0xC0) != 0x80) {
        text.push_back('\x01');
      }
    }
    auto plot = [&](int x, int y) {
      if (x < r.x0 || x >= r.x1 || y < r.y0 || y >= r.y1) return;
      out.set_rgb(y, x, kInk, kInk, kInk);
    };
    for (std::size_t j = 0; j < text.size(); ++j) {
      const Glyph& g = glyph(text[j]);
      const int ox = vertical ? r.x0 + (bw - kGlyphW * scale) / 2 : r.x0 + static_cast<int>(j) * kCellW * scale;
      const int oy = vertical ? r.y0 + static_cast<int>(j) * kCellH * scale : r.y0 + (bh - kGlyphH * scale) / 2;
      for (int gy = 0; gy < kGlyphH; ++gy)
        for (int gx = 0; gx < kGlyphW; ++gx) {
          if (g[static_cast<std::size_t>(gy)][gx] != '#') continue;
          for (int sy = 0; sy < scale; ++sy)
            for (int sx = 0; sx < scale; ++sx) plot(ox + gx * scale + sx, oy + gy * scale + sy);
        }
    }
  }
  return out;
}

}  // namespace boxcap::render
