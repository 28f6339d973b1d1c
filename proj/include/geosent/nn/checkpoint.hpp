#pragma once

#include <filesystem>
#include <iosfwd>

#include <json.hpp>

#include "geosent/nn/model.hpp"

namespace geosent::nn {

/// Archive layout:
///   "GSCK" | u32 version | u32 header length | header JSON
///   then per tensor: u32 name length | name | u32 rows | u32 cols | rows*cols f32
/// All integers and floats little-endian. The header carries the model spec,
/// input length, tensor names and caller metadata (vocabulary/taxonomy digests).
struct Checkpoint {
  Model<float> model;
  nlohmann::json metadata;
};

void write_checkpoint(std::ostream& out, const Model<float>& model, const nlohmann::json& metadata);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model, const nlohmann::json& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace geosent::nn
