#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>

#include "warpadam/error.hpp"
#include "warpadam/tasks.hpp"

namespace warpadam {

namespace {

// Header token reader: skips whitespace and '#' comments.
class HeaderScanner {
 public:
  HeaderScanner(std::string_view bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  std::size_t number(const char* field) {
    skip();
    std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (std::size_t{1} << 32)) fail(std::string(field) + " is too large");
      ++pos_;
    }
    if (pos_ == start) fail(std::string("missing ") + field);
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      fail("missing whitespace before raster");
    }
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(origin_ + ": malformed PGM header: " + msg);
  }

 private:
  void skip() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view bytes_;
  const std::string& origin_;
  std::size_t pos_ = 2;
};

}  // namespace

GrayImage decode_pgm(std::string_view bytes, const std::string& origin) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw ParseError(origin + ": malformed PGM header: expected magic P5");
  }
  HeaderScanner scan(bytes, origin);
  GrayImage img;
  img.width = scan.number("width");
  img.height = scan.number("height");
  const std::size_t maxval = scan.number("maxval");
  if (img.width == 0 || img.height == 0) scan.fail("zero image dimension");
  if (maxval == 0 || maxval > 255) scan.fail("maxval must be in 1..255, got " + std::to_string(maxval));
  img.maxval = static_cast<unsigned>(maxval);
  const std::size_t start = scan.raster_start();
  const std::size_t n = img.width * img.height;
  if (bytes.size() < start + n) {
    throw ParseError(origin + ": truncated PGM raster, expected " + std::to_string(n) + " bytes");
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                    bytes.begin() + static_cast<std::ptrdiff_t>(start + n));
  return img;
}

std::string encode_pgm(const GrayImage& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n" +
                    std::to_string(image.maxval) + "\n";
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

std::vector<double> resample_unit(const GrayImage& image, std::size_t side) {
  if (side == 0) throw ContractError("image side must be positive");
  std::vector<double> out(side * side);
  const double scale = static_cast<double>(image.maxval);
  for (std::size_t y = 0; y < side; ++y) {
    const std::size_t sy = y * image.height / side;
    for (std::size_t x = 0; x < side; ++x) {
      const std::size_t sx = x * image.width / side;
      out[y * side + x] = static_cast<double>(image.pixels[sy * image.width + sx]) / scale;
    }
  }
  return out;
}

namespace {

std::vector<std::filesystem::path> sorted_entries(const std::filesystem::path& dir, bool want_dirs) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (want_dirs ? e.is_directory() : (e.is_regular_file() && e.path().extension() == ".pgm")) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

ClassTable import_image_classes(const std::filesystem::path& root, std::size_t image_side) {
  if (image_side == 0) throw ContractError("image side must be positive");
  if (!std::filesystem::is_directory(root)) throw IoError(root.string() + " is not a directory");
  ClassTable table;
  table.input_dim = image_side * image_side;
  for (const auto& alpha_dir : sorted_entries(root, true)) {
    Alphabet alpha;
    alpha.name = alpha_dir.filename().string();
    for (const auto& char_dir : sorted_entries(alpha_dir, true)) {
      const auto files = sorted_entries(char_dir, false);
      if (files.empty()) {
        ++table.skipped_empty;
        continue;
      }
      CharacterClass cls;
      cls.name = char_dir.filename().string();
      for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw IoError("cannot open " + f.string());
        const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        cls.instances.push_back(resample_unit(decode_pgm(bytes, f.string()), image_side));
      }
      alpha.characters.push_back(std::move(cls));
    }
    if (!alpha.characters.empty()) table.alphabets.push_back(std::move(alpha));
  }
  return table;
}

}  // namespace warpadam
