#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "quicksilver/grid.hpp"

namespace quicksilver {

enum class FieldKind { Image, Momentum, Velocity, Map, Label };

std::string_view to_string(FieldKind kind);
FieldKind field_kind_from_string(std::string_view s);

/// Raw contents of a QSF file. Unlike the typed fields this does not enforce
/// the grid invariants, so any header the format can express is representable.
///
///   QSF 1
///   dim <d>
///   sizes <n1> ... <nd>
///   spacing <s1> ... <sd>
///   channels <c>
///   kind <image|momentum|velocity|map|label>
///   data
///   <little-endian float32 payload, channels-last, last axis fastest>
struct QsfRecord {
  int dim = 2;
  std::vector<int> sizes;
  std::vector<double> spacing;
  int channels = 1;
  FieldKind kind = FieldKind::Image;
  std::vector<float> data;
};

std::string encode_qsf(const QsfRecord& rec);
QsfRecord decode_qsf(std::string_view bytes);

QsfRecord read_qsf(const std::filesystem::path& path);
void write_qsf(const QsfRecord& rec, const std::filesystem::path& path);

// Typed helpers. Values are stored as float32, so doubles that are not
// exactly representable lose precision on write.
void write_field(const ScalarImage& img, const std::filesystem::path& path, FieldKind kind = FieldKind::Image);
void write_field(const VectorField& field, const std::filesystem::path& path,
                 FieldKind kind = FieldKind::Momentum);
void write_field(const DeformationMap& map, const std::filesystem::path& path);

ScalarImage read_scalar(const std::filesystem::path& path);
VectorField read_vector(const std::filesystem::path& path);
DeformationMap read_map(const std::filesystem::path& path);

}  // namespace quicksilver
