#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "quicksilver/nn/network.hpp"

namespace quicksilver::nn {

// Weight file layout:
//
//   QSNET 1
//   dim <d>
//   tensor <name> <rank> <extent>...      (once per parameter, architecture order)
//   <little-endian float32 payload of that tensor>
//
// The feature width is recovered from the first tensor's shape.

std::string encode_qsnet(const Network<float>& net);
Network<float> decode_qsnet(std::string_view bytes);

void write_qsnet(const Network<float>& net, const std::filesystem::path& path);
Network<float> read_qsnet(const std::filesystem::path& path);

}  // namespace quicksilver::nn
