// Checkpoint layout (all integers u32 little-endian, all reals IEEE-754
// binary64 little-endian):
//   magic "DPTYCKPT" | version | activation | layer count L |
//   L+1 widths (input width, then each layer's output width) |
//   per layer: weight (out x in, row-major) then bias (out).

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "deputy/encoder.hpp"
#include "deputy/errors.hpp"

namespace deputy {

namespace {

constexpr char kMagic[8] = {'D', 'P', 'T', 'Y', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f64(std::string& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }

  std::string_view raw(std::size_t n) {
    need(n);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw Error(ErrorCode::kParseError, "checkpoint truncated at byte " + std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const EncoderParams& params) {
  params.validate();
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(params.activation));
  put_u32(out, static_cast<std::uint32_t>(params.layers.size()));
  put_u32(out, static_cast<std::uint32_t>(params.input_dim()));
  for (const Layer& layer : params.layers) put_u32(out, static_cast<std::uint32_t>(layer.weight.rows()));
  for (const Layer& layer : params.layers) {
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) put_f64(out, layer.weight(i, j));
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) put_f64(out, layer.bias(i));
  }
  return out;
}

EncoderParams deserialize_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (std::memcmp(in.raw(sizeof(kMagic)).data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kParseError, "not a deputy checkpoint (bad magic)");
  }
  const std::uint32_t version = in.u32();
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kParseError, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t act = in.u32();
  if (act > 1) throw Error(ErrorCode::kParseError, "unknown activation code " + std::to_string(act));
  const std::uint32_t n_layers = in.u32();
  if (n_layers == 0 || n_layers > 1024) {
    throw Error(ErrorCode::kParseError, "implausible layer count " + std::to_string(n_layers));
  }
  std::vector<std::uint32_t> widths(n_layers + 1);
  for (auto& w : widths) {
    w = in.u32();
    if (w == 0 || w > (1u << 20)) throw Error(ErrorCode::kParseError, "implausible layer width");
  }
  EncoderParams params;
  params.activation = static_cast<Activation>(act);
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    Layer layer{Matrix(widths[l + 1], widths[l]), Vector(widths[l + 1])};
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = in.f64();
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = in.f64();
    params.layers.push_back(std::move(layer));
  }
  if (!in.done()) throw Error(ErrorCode::kParseError, "trailing bytes after checkpoint");
  params.validate();
  return params;
}

void save_checkpoint(const std::string& path, const EncoderParams& params) {
  const std::string bytes = serialize_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path);
}

EncoderParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace deputy
