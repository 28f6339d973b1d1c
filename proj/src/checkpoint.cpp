#include "geosent/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "geosent/error.hpp"

namespace geosent::nn {

namespace {

constexpr char kMagic[4] = {'G', 'S', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(sizeof(T) == 4);
  std::uint32_t bits;
  std::memcpy(&bits, &value, 4);
  unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                        static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated checkpoint");
  const std::uint32_t bits = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
                             std::uint32_t(b[3]) << 24;
  T value;
  std::memcpy(&value, &bits, 4);
  return value;
}

std::string get_bytes(std::istream& in, std::size_t n) {
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) throw FormatError("truncated checkpoint");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Model<float>& model, const nlohmann::json& metadata) {
  nlohmann::json header;
  header["spec"] = model.spec().to_json();
  header["input_length"] = model.input_length();
  header["metadata"] = metadata;
  header["tensors"] = nlohmann::json::array();
  for (const auto& [name, value] : model.parameters()) {
    header["tensors"].push_back({{"name", name}, {"shape", {value.rows(), value.cols()}}});
  }
  const std::string text = header.dump();
  out.write(kMagic, 4);
  put_le(out, kVersion);
  put_le(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, value] : model.parameters()) {
    put_le(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le(out, static_cast<std::uint32_t>(value.rows()));
    put_le(out, static_cast<std::uint32_t>(value.cols()));
    for (Eigen::Index i = 0; i < value.size(); ++i) put_le(out, value.data()[i]);
  }
  if (!out) throw IoError("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  if (get_bytes(in, 4) != std::string(kMagic, 4)) throw FormatError("not a checkpoint (bad magic)");
  if (get_le<std::uint32_t>(in) != kVersion) throw FormatError("unsupported checkpoint version");
  const auto header_len = get_le<std::uint32_t>(in);
  const auto header = nlohmann::json::parse(get_bytes(in, header_len), nullptr, false);
  if (header.is_discarded()) throw FormatError("corrupt checkpoint header");
  ParameterSet<float> params;
  for (std::size_t t = 0; t < header.at("tensors").size(); ++t) {
    const auto name = get_bytes(in, get_le<std::uint32_t>(in));
    const auto rows = get_le<std::uint32_t>(in);
    const auto cols = get_le<std::uint32_t>(in);
    Matrix<float> value(rows, cols);
    for (Eigen::Index i = 0; i < value.size(); ++i) value.data()[i] = get_le<float>(in);
    params.emplace(name, std::move(value));
  }
  return {Model<float>(ModelSpec::from_json(header.at("spec")), header.at("input_length").get<std::size_t>(),
                       std::move(params)),
          header.value("metadata", nlohmann::json::object())};
}

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model, const nlohmann::json& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  write_checkpoint(out, model, metadata);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace geosent::nn
