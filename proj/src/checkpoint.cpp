#include "uwmmse/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "uwmmse/errors.hpp"
#include "uwmmse/seeding.hpp"

namespace uwmmse::checkpoint {

namespace {

constexpr const char* kMagic = "uwmmse-checkpoint";

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

// Line-oriented reader that reports the byte offset of the current line.
class Reader {
 public:
  explicit Reader(const std::string& text) : text_(text) {}

  std::istringstream next(const char* what) {
    if (pos_ >= text_.size()) throw FormatError(std::string("missing ") + what, pos_);
    line_start_ = pos_;
    auto end = text_.find('\n', pos_);
    if (end == std::string::npos) end = text_.size();
    std::istringstream line(text_.substr(pos_, end - pos_));
    line.precision(17);
    pos_ = end + 1;
    return line;
  }

  [[noreturn]] void fail(const std::string& what) const { throw FormatError(what, line_start_); }

  void expect(std::istringstream& line, const char* key) {
    std::string word;
    if (!(line >> word) || word != key) fail(std::string("expected '") + key + "'");
  }

  template <class T>
  T value(std::istringstream& line, const char* key) {
    expect(line, key);
    T v{};
    if (!(line >> v)) fail(std::string("bad value for '") + key + "'");
    return v;
  }

  [[nodiscard]] bool done() const { return pos_ >= text_.size(); }

 private:
  const std::string& text_;
  std::size_t pos_ = 0;
  std::size_t line_start_ = 0;
};

}  // namespace

std::string encode(const model::ModelParams& params, const channel::NetworkConfig& net) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << kMagic << ' ' << kCheckpointVersion << '\n';
  out << "network M " << net.M << " R " << net.R << " T " << net.T << " d " << net.d
      << " sigma " << net.sigma << " pmax " << net.pmax << " v_convention "
      << channel::to_string(net.v_convention) << " alpha " << net.alpha.size();
  for (double a : net.alpha) out << ' ' << a;
  out << '\n';
  const auto& hy = params.hyper;
  out << "hyper F " << hy.F << " G " << hy.G << " Fp " << hy.Fp << " P " << hy.P << " K_train "
      << hy.K_train << '\n';
  const auto blocks = params.blocks();
  const auto& names = model::ModelParams::block_names();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    out << "block " << names[b] << ' ' << blocks[b].rows() << ' ' << blocks[b].cols() << '\n';
    for (const cplx& z : blocks[b].values()) out << z.real() << ' ' << z.imag() << '\n';
  }
  std::string body = out.str();
  body += "hash " + hex64(fnv1a64(body)) + '\n';
  return body;
}

Checkpoint decode(const std::string& text) {
  // Integrity first: the hash line is the last line of the file.
  const auto hash_at = text.rfind("hash ");
  if (hash_at == std::string::npos || (hash_at != 0 && text[hash_at - 1] != '\n')) {
    throw FormatError("checkpoint hash line missing (truncated file?)");
  }
  std::string stored = text.substr(hash_at + 5);
  while (!stored.empty() && (stored.back() == '\n' || stored.back() == '\r')) stored.pop_back();
  const std::string body = text.substr(0, hash_at);
  if (stored != hex64(fnv1a64(body))) throw FormatError("checkpoint hash mismatch", hash_at);

  Reader in(body);
  Checkpoint ck;
  {
    auto line = in.next("header");
    const int version = in.value<int>(line, kMagic);
    if (version != kCheckpointVersion) {
      in.fail("unsupported checkpoint version " + std::to_string(version));
    }
  }
  auto& net = ck.network;
  {
    auto line = in.next("network line");
    in.expect(line, "network");
    net.M = in.value<std::size_t>(line, "M");
    net.R = in.value<std::size_t>(line, "R");
    net.T = in.value<std::size_t>(line, "T");
    net.d = in.value<std::size_t>(line, "d");
    net.sigma = in.value<double>(line, "sigma");
    net.pmax = in.value<double>(line, "pmax");
    try {
      net.v_convention = channel::parse_v_convention(in.value<std::string>(line, "v_convention"));
    } catch (const ConfigError& e) {
      in.fail(e.what());
    }
    const auto n_alpha = in.value<std::size_t>(line, "alpha");
    net.alpha.resize(n_alpha);
    for (double& a : net.alpha) {
      if (!(line >> a)) in.fail("bad alpha list");
    }
  }
  auto& hy = ck.params.hyper;
  {
    auto line = in.next("hyper line");
    in.expect(line, "hyper");
    hy.F = in.value<std::size_t>(line, "F");
    hy.G = in.value<std::size_t>(line, "G");
    hy.Fp = in.value<std::size_t>(line, "Fp");
    hy.P = in.value<std::size_t>(line, "P");
    hy.K_train = in.value<std::size_t>(line, "K_train");
  }
  const auto& names = model::ModelParams::block_names();
  std::vector<CMatrix> blocks;
  for (const auto& name : names) {
    auto line = in.next("parameter block");
    in.expect(line, "block");
    std::string got;
    std::size_t rows = 0, cols = 0;
    if (!(line >> got >> rows >> cols)) in.fail("bad block header");
    if (got != name) in.fail("expected block '" + name + "', found '" + got + "'");
    CMatrix m(rows, cols);
    for (std::size_t k = 0; k < m.size(); ++k) {
      auto entry = in.next("block entry");
      double re = 0.0, im = 0.0;
      if (!(entry >> re >> im)) in.fail("bad entry in block '" + name + "'");
      m[k] = {re, im};
    }
    blocks.push_back(std::move(m));
  }
  if (!in.done()) throw FormatError("unexpected content after the last block");

  auto& p = ck.params;
  p.theta11 = blocks[0];
  p.theta12 = blocks[1];
  p.theta21 = blocks[2];
  p.theta22 = blocks[3];
  p.omega = blocks[4];
  if (blocks[5].rows() != 1 || blocks[5].cols() != 1) throw FormatError("mu must be 1x1");
  p.mu = blocks[5][0];
  try {
    net.validate();
    p.validate(net);
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint shape mismatch: ") + e.what());
  }
  return ck;
}

void save(const std::filesystem::path& path, const model::ModelParams& params,
          const channel::NetworkConfig& network) {
  const std::string text = encode(params, network);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::ios_base::failure("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw std::ios_base::failure("write failed for " + path.string());
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::ios_base::failure("cannot open " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return decode(buf.str());
}

}  // namespace uwmmse::checkpoint
