#include "quicksilver/qsf.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "quicksilver/error.hpp"

namespace quicksilver {

static_assert(std::endian::native == std::endian::little, "QSF I/O assumes a little-endian host");

namespace {

using Kind = FormatError::Kind;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Reads one '\n'-terminated header line starting at `pos`.
std::string_view next_line(std::string_view bytes, std::size_t& pos) {
  const std::size_t end = bytes.find('\n', pos);
  if (end == std::string_view::npos) throw FormatError(Kind::BadHeader, "QSF header is incomplete");
  std::string_view line = bytes.substr(pos, end - pos);
  pos = end + 1;
  return line;
}

std::istringstream expect_key(std::string_view line, std::string_view key) {
  std::istringstream is{std::string(line)};
  std::string k;
  is >> k;
  if (k != key) throw FormatError(Kind::BadHeader, "QSF header: expected '" + std::string(key) + "', got '" + k + "'");
  return is;
}

std::size_t voxel_count(const QsfRecord& rec) {
  std::size_t n = 1;
  for (int s : rec.sizes) n *= static_cast<std::size_t>(s);
  return n;
}

GridGeometry geometry_of(const QsfRecord& rec) {
  try {
    return GridGeometry::make(rec.sizes, rec.spacing);
  } catch (const InvalidArgument& e) {
    throw FormatError(Kind::BadHeader, std::string("QSF geometry invalid: ") + e.what());
  }
}

std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

std::vector<float> narrow(std::span<const double> v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

QsfRecord record_for(const GridGeometry& g, int channels, FieldKind kind, std::span<const double> values) {
  QsfRecord rec;
  rec.dim = g.dim;
  rec.sizes.assign(g.sizes.begin(), g.sizes.begin() + g.dim);
  rec.spacing.assign(g.spacing.begin(), g.spacing.begin() + g.dim);
  rec.channels = channels;
  rec.kind = kind;
  rec.data = narrow(values);
  return rec;
}

}  // namespace

std::string_view to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::Image: return "image";
    case FieldKind::Momentum: return "momentum";
    case FieldKind::Velocity: return "velocity";
    case FieldKind::Map: return "map";
    case FieldKind::Label: return "label";
  }
  return "image";
}

FieldKind field_kind_from_string(std::string_view s) {
  if (s == "image") return FieldKind::Image;
  if (s == "momentum") return FieldKind::Momentum;
  if (s == "velocity") return FieldKind::Velocity;
  if (s == "map") return FieldKind::Map;
  if (s == "label") return FieldKind::Label;
  throw FormatError(Kind::BadHeader, "unknown QSF kind '" + std::string(s) + "'");
}

std::string encode_qsf(const QsfRecord& rec) {
  if (static_cast<int>(rec.sizes.size()) != rec.dim || static_cast<int>(rec.spacing.size()) != rec.dim)
    throw FormatError(Kind::DimensionMismatch, "QSF record: sizes/spacing length differs from dim");
  if (rec.data.size() != voxel_count(rec) * rec.channels)
    throw FormatError(Kind::PayloadSizeMismatch, "payload size mismatch");
  std::string out = "QSF 1\ndim " + std::to_string(rec.dim) + "\nsizes";
  for (int s : rec.sizes) out += " " + std::to_string(s);
  out += "\nspacing";
  for (double s : rec.spacing) out += " " + format_double(s);
  out += "\nchannels " + std::to_string(rec.channels);
  out += "\nkind " + std::string(to_string(rec.kind)) + "\ndata\n";
  const std::size_t header = out.size();
  out.resize(header + rec.data.size() * sizeof(float));
  std::memcpy(out.data() + header, rec.data.data(), rec.data.size() * sizeof(float));
  return out;
}

QsfRecord decode_qsf(std::string_view bytes) {
  std::size_t pos = 0;
  const std::size_t magic_end = bytes.find('\n');
  if (magic_end == std::string_view::npos || bytes.substr(0, magic_end) != "QSF 1")
    throw FormatError(Kind::BadMagic, "bad magic: not a QSF 1 file");
  pos = magic_end + 1;

  QsfRecord rec;
  {
    auto is = expect_key(next_line(bytes, pos), "dim");
    if (!(is >> rec.dim) || (rec.dim != 2 && rec.dim != 3))
      throw FormatError(Kind::BadHeader, "QSF header: dim must be 2 or 3");
  }
  {
    auto is = expect_key(next_line(bytes, pos), "sizes");
    for (int v; is >> v;) rec.sizes.push_back(v);
  }
  {
    auto is = expect_key(next_line(bytes, pos), "spacing");
    for (double v; is >> v;) rec.spacing.push_back(v);
  }
  if (static_cast<int>(rec.sizes.size()) != rec.dim || static_cast<int>(rec.spacing.size()) != rec.dim)
    throw FormatError(Kind::DimensionMismatch, "dimension mismatch: sizes/spacing do not have dim entries");
  for (int s : rec.sizes)
    if (s <= 0) throw FormatError(Kind::BadHeader, "QSF header: sizes must be positive");
  {
    auto is = expect_key(next_line(bytes, pos), "channels");
    if (!(is >> rec.channels) || rec.channels <= 0)
      throw FormatError(Kind::BadHeader, "QSF header: bad channel count");
  }
  {
    auto is = expect_key(next_line(bytes, pos), "kind");
    std::string k;
    is >> k;
    rec.kind = field_kind_from_string(k);
  }
  if (next_line(bytes, pos) != "data") throw FormatError(Kind::BadHeader, "QSF header: missing 'data' line");

  const std::size_t voxels = voxel_count(rec);
  const std::size_t expected = voxels * rec.channels * sizeof(float);
  const std::size_t have = bytes.size() - pos;
  if (have != expected) {
    const std::size_t per_channel = voxels * sizeof(float);
    if (have < expected && have % per_channel != 0) throw FormatError(Kind::Truncated, "truncated payload");
    throw FormatError(Kind::PayloadSizeMismatch, "payload size mismatch");
  }
  rec.data.resize(voxels * rec.channels);
  std::memcpy(rec.data.data(), bytes.data() + pos, expected);
  return rec;
}

QsfRecord read_qsf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(Kind::Io, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_qsf(bytes);
}

void write_qsf(const QsfRecord& rec, const std::filesystem::path& path) {
  const std::string bytes = encode_qsf(rec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(Kind::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(Kind::Io, "write failed for " + path.string());
}

void write_field(const ScalarImage& img, const std::filesystem::path& path, FieldKind kind) {
  write_qsf(record_for(img.geometry(), 1, kind, img.values()), path);
}

void write_field(const VectorField& field, const std::filesystem::path& path, FieldKind kind) {
  write_qsf(record_for(field.geometry(), field.channels(), kind, field.values()), path);
}

void write_field(const DeformationMap& map, const std::filesystem::path& path) {
  write_qsf(record_for(map.geometry(), map.geometry().dim, FieldKind::Map, map.coords()), path);
}

ScalarImage read_scalar(const std::filesystem::path& path) {
  const QsfRecord rec = read_qsf(path);
  if (rec.channels != 1) throw FormatError(Kind::DimensionMismatch, path.string() + ": expected a scalar field");
  return ScalarImage(geometry_of(rec), widen(rec.data));
}

VectorField read_vector(const std::filesystem::path& path) {
  const QsfRecord rec = read_qsf(path);
  if (rec.channels != rec.dim)
    throw FormatError(Kind::DimensionMismatch, path.string() + ": expected " + std::to_string(rec.dim) + " channels");
  return VectorField(geometry_of(rec), widen(rec.data));
}

DeformationMap read_map(const std::filesystem::path& path) {
  const QsfRecord rec = read_qsf(path);
  if (rec.channels != rec.dim)
    throw FormatError(Kind::DimensionMismatch, path.string() + ": expected " + std::to_string(rec.dim) + " channels");
  return DeformationMap(geometry_of(rec), widen(rec.data));
}

}  // namespace quicksilver
