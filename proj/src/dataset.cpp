#include "uwmmse/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "uwmmse/errors.hpp"

namespace uwmmse::channel {

namespace {

constexpr char kMagic[4] = {'U', 'W', 'M', 'M'};
constexpr std::size_t kHeaderSize = 32;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t uint(std::size_t width, const char* what) {
    if (pos_ + width > bytes_.size()) throw FormatError(std::string("truncated ") + what, pos_);
    std::uint64_t v = 0;
    for (std::size_t k = 0; k < width; ++k) v |= std::uint64_t{bytes_[pos_ + k]} << (8 * k);
    pos_ += width;
    return v;
  }

  [[nodiscard]] std::size_t pos() const { return pos_; }
  [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  std::vector<std::uint8_t> out;
  const std::size_t per = ds.M * ds.M * ds.R * ds.T;
  out.reserve(kHeaderSize + ds.samples.size() * per * 16);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kDatasetVersion);
  put_u32(out, static_cast<std::uint32_t>(ds.M));
  put_u32(out, static_cast<std::uint32_t>(ds.R));
  put_u32(out, static_cast<std::uint32_t>(ds.T));
  put_u32(out, static_cast<std::uint32_t>(ds.d));
  put_u64(out, ds.samples.size());
  for (std::size_t s = 0; s < ds.samples.size(); ++s) {
    const CsiTensor& h = ds.samples[s];
    if (h.M() != ds.M || h.R() != ds.R || h.T() != ds.T) {
      throw ShapeError("dataset sample " + std::to_string(s) + " does not match header shape");
    }
    for (std::size_t k = 0; k < per; ++k) {
      const cplx x = h.coefficient(k);
      put_u64(out, std::bit_cast<std::uint64_t>(x.real()));
      put_u64(out, std::bit_cast<std::uint64_t>(x.imag()));
    }
  }
  return out;
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad magic, expected \"UWMM\"", 0);
  }
  Reader in(bytes.subspan(4));
  const auto version = in.uint(4, "header");
  if (version != kDatasetVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(version), 4);
  }
  Dataset ds;
  ds.M = in.uint(4, "header");
  ds.R = in.uint(4, "header");
  ds.T = in.uint(4, "header");
  ds.d = in.uint(4, "header");
  const std::uint64_t count = in.uint(8, "header");
  if (ds.M == 0 || ds.R == 0 || ds.T == 0 || ds.d == 0) {
    if (count != 0) throw FormatError("zero dimension with nonzero sample count", 8);
  }
  const std::size_t per = ds.M * ds.M * ds.R * ds.T;
  const std::size_t need = count * per * 16;
  if (per != 0 && (count > in.remaining() / (per * 16) || in.remaining() < need)) {
    throw FormatError("truncated payload: need " + std::to_string(need) + " bytes, have " +
                          std::to_string(in.remaining()),
                      4 + in.pos());
  }
  ds.samples.reserve(count);
  for (std::uint64_t s = 0; s < count; ++s) {
    CsiTensor h(ds.M, ds.R, ds.T);
    for (std::size_t k = 0; k < per; ++k) {
      const double re = std::bit_cast<double>(in.uint(8, "payload"));
      const double im = std::bit_cast<double>(in.uint(8, "payload"));
      h.coefficient(k) = cplx(re, im);
    }
    ds.samples.push_back(std::move(h));
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after payload", 4 + in.pos());
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  const auto bytes = encode_dataset(dataset);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::ios_base::failure("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::ios_base::failure("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::ios_base::failure("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

}  // namespace uwmmse::channel
