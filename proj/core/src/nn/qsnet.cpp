#include "quicksilver/nn/qsnet.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "quicksilver/error.hpp"

namespace quicksilver::nn {

static_assert(std::endian::native == std::endian::little, "QSNET I/O assumes a little-endian host");

namespace {

using Kind = FormatError::Kind;

struct Reader {
  std::string_view bytes;
  std::size_t pos = 0;

  std::string line() {
    const std::size_t end = bytes.find('\n', pos);
    if (end == std::string_view::npos) throw FormatError(Kind::Truncated, "QSNET: unexpected end of header");
    std::string out(bytes.substr(pos, end - pos));
    pos = end + 1;
    return out;
  }
};

struct TensorHeader {
  std::string name;
  std::vector<int> shape;
};

TensorHeader parse_tensor_line(const std::string& line) {
  std::istringstream is(line);
  std::string key;
  TensorHeader h;
  int rank = -1;
  is >> key >> h.name >> rank;
  if (key != "tensor" || h.name.empty() || rank < 1 || rank > 8)
    throw FormatError(Kind::BadHeader, "QSNET: malformed tensor line '" + line + "'");
  h.shape.resize(rank);
  for (int& e : h.shape)
    if (!(is >> e) || e < 1) throw FormatError(Kind::BadHeader, "QSNET: bad extent in '" + line + "'");
  std::string extra;
  if (is >> extra) throw FormatError(Kind::BadHeader, "QSNET: trailing tokens in '" + line + "'");
  return h;
}

}  // namespace

std::string encode_qsnet(const Network<float>& net) {
  std::string out = "QSNET 1\ndim " + std::to_string(net.config().dim) + "\n";
  for (const auto& p : net.params()) {
    out += "tensor " + p.name + " " + std::to_string(p.value.rank());
    for (int e : p.value.shape) out += " " + std::to_string(e);
    out += "\n";
    const std::size_t nbytes = p.value.numel() * sizeof(float);
    const std::size_t at = out.size();
    out.resize(at + nbytes);
    std::memcpy(out.data() + at, p.value.data.data(), nbytes);
  }
  return out;
}

Network<float> decode_qsnet(std::string_view bytes) {
  Reader r{bytes};
  if (bytes.substr(0, 6) != "QSNET ") throw FormatError(Kind::BadMagic, "QSNET: bad magic");
  if (r.line() != "QSNET 1") throw FormatError(Kind::BadHeader, "QSNET: unsupported version");
  int dim = 0;
  {
    std::istringstream is(r.line());
    std::string key;
    if (!(is >> key >> dim) || key != "dim") throw FormatError(Kind::BadHeader, "QSNET: expected 'dim'");
    if (dim != 2 && dim != 3) throw FormatError(Kind::DimensionMismatch, "QSNET: dim must be 2 or 3");
  }
  // The first tensor (moving encoder, first conv weight) is (F, 1, 3...).
  const std::size_t first = r.pos;
  const TensorHeader h0 = parse_tensor_line(r.line());
  if (static_cast<int>(h0.shape.size()) != dim + 2)
    throw FormatError(Kind::DimensionMismatch, "QSNET: first tensor rank does not match dim");
  r.pos = first;

  Network<float> net(NetConfig{dim, h0.shape[0]});
  for (auto& p : net.params()) {
    if (r.pos >= bytes.size()) throw FormatError(Kind::Truncated, "QSNET: missing tensor " + p.name);
    const TensorHeader h = parse_tensor_line(r.line());
    if (h.name != p.name) throw FormatError(Kind::BadHeader, "QSNET: expected tensor " + p.name + ", got " + h.name);
    if (h.shape != p.value.shape)
      throw FormatError(Kind::DimensionMismatch, "QSNET: tensor " + p.name + " has shape " + shape_string(h.shape) +
                                                     ", expected " + shape_string(p.value.shape));
    const std::size_t nbytes = p.value.numel() * sizeof(float);
    if (bytes.size() - r.pos < nbytes) throw FormatError(Kind::Truncated, "QSNET: payload of " + p.name + " truncated");
    std::memcpy(p.value.data.data(), bytes.data() + r.pos, nbytes);
    r.pos += nbytes;
  }
  if (r.pos != bytes.size()) throw FormatError(Kind::PayloadSizeMismatch, "QSNET: trailing bytes after last tensor");
  return net;
}

void write_qsnet(const Network<float>& net, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(Kind::Io, "cannot open " + path.string() + " for writing");
  const std::string bytes = encode_qsnet(net);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError(Kind::Io, "write failed: " + path.string());
}

Network<float> read_qsnet(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(Kind::Io, "cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  return decode_qsnet(bytes);
}

}  // namespace quicksilver::nn
