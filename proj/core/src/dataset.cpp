#include "misconv/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>

#include "misconv/error.hpp"

namespace misconv {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::string& what) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (in.gcount() != 4) throw FormatError("truncated " + what);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                                 static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

void read_magic(std::istream& in, std::uint32_t expected, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  const std::uint32_t magic = in.gcount() == 4 ? (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
                                                     (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]}
                                               : 0;
  if (in.gcount() != 4 || magic != expected) {
    throw FormatError(path.string() + ": bad IDX magic");
  }
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::optional<std::size_t> limit) {
  std::ifstream images = open_binary(images_path);
  read_magic(images, kImageMagic, images_path);
  const std::uint32_t count = read_be32(images, "IDX image header");
  const std::uint32_t rows = read_be32(images, "IDX image header");
  const std::uint32_t cols = read_be32(images, "IDX image header");

  std::ifstream labels = open_binary(labels_path);
  read_magic(labels, kLabelMagic, labels_path);
  const std::uint32_t label_count = read_be32(labels, "IDX label header");
  if (label_count != count) {
    throw FormatError("IDX count mismatch: " + std::to_string(count) + " images, " +
                      std::to_string(label_count) + " labels");
  }
  if (rows == 0 || cols == 0) throw FormatError("IDX images with a zero dimension");

  const std::size_t keep = std::min<std::size_t>(count, limit.value_or(count));
  Dataset data;
  data.shape = ImageShape{1, static_cast<Index>(rows), static_cast<Index>(cols)};
  data.images.reserve(keep);
  data.labels.reserve(keep);

  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> buffer(n);
  for (std::size_t i = 0; i < keep; ++i) {
    images.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(images.gcount()) != n) {
      throw FormatError(images_path.string() + ": truncated image payload");
    }
    Vector px(static_cast<Index>(n));
    for (std::size_t j = 0; j < n; ++j) px(static_cast<Index>(j)) = buffer[j] / 255.0;
    data.images.push_back(MaskedImage::complete(std::move(px)));

    char label = 0;
    labels.read(&label, 1);
    if (labels.gcount() != 1) throw FormatError(labels_path.string() + ": truncated label payload");
    data.labels.push_back(static_cast<unsigned char>(label));
  }
  return data;
}

void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               const Dataset& data) {
  if (data.images.size() != data.labels.size()) throw InvalidArgument("image/label count mismatch");
  if (data.shape.channels != 1) throw InvalidArgument("IDX writer supports single-channel images");
  std::ofstream images(images_path, std::ios::binary);
  std::ofstream labels(labels_path, std::ios::binary);
  if (!images || !labels) throw Error("cannot open IDX output files");
  write_be32(images, kImageMagic);
  write_be32(images, static_cast<std::uint32_t>(data.size()));
  write_be32(images, static_cast<std::uint32_t>(data.shape.height));
  write_be32(images, static_cast<std::uint32_t>(data.shape.width));
  write_be32(labels, kLabelMagic);
  write_be32(labels, static_cast<std::uint32_t>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector& px = data.images[i].pixels();
    for (Index j = 0; j < px.size(); ++j) {
      const double v = std::clamp(px(j), 0.0, 1.0);
      images.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
    labels.put(static_cast<char>(static_cast<unsigned char>(data.labels[i])));
  }
}

Matrix pixel_matrix(const std::vector<MaskedImage>& images) {
  if (images.empty()) return Matrix();
  Matrix out(images.front().size(), static_cast<Index>(images.size()));
  for (std::size_t i = 0; i < images.size(); ++i) out.col(static_cast<Index>(i)) = images[i].pixels();
  return out;
}

}  // namespace misconv
