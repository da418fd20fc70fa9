#include "recomp/pipeline/checkpoint.hpp"

#include "recomp/pipeline/binio.hpp"

namespace recomp {

namespace {

constexpr char kMagic[4] = {'R', 'C', 'M', 'P'};
constexpr uint32_t kVersion = 1;
constexpr uint8_t kDtypeF32 = 0;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
  ByteWriter w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u32(uint32_t(data.kind));
  w.str(data.config_json);
  w.u32(uint32_t(data.tensors.size()));
  for (const auto& [name, tensor] : data.tensors) {
    w.str(name);
    w.u8(kDtypeF32);
    w.u8(uint8_t(tensor.shape.size()));
    for (int64_t d : tensor.shape) w.u32(uint32_t(d));
    for (float v : tensor.data) w.f32(v);
  }
  w.finish_crc();
  write_file_atomic(path, w.bytes());
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  ByteReader r(read_file(path));
  r.check_crc("checkpoint");
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw Error(ErrorKind::Corrupt, "checkpoint: bad magic in " + path.string());
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw Error(ErrorKind::Version, "checkpoint: unsupported format version " +
                                        std::to_string(version) + " (expected " +
                                        std::to_string(kVersion) + ")");
  CheckpointData data;
  const uint32_t kind = r.u32();
  if (kind != uint32_t(ModelKind::VqVae) && kind != uint32_t(ModelKind::Prior))
    throw Error(ErrorKind::Corrupt, "checkpoint: unknown model kind tag " + std::to_string(kind));
  data.kind = ModelKind(kind);
  data.config_json = r.str();
  const uint32_t count = r.u32();
  std::string prev_name;
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    if (i > 0 && !(prev_name < name))
      throw Error(ErrorKind::Corrupt, "checkpoint: tensor names not sorted/unique at '" + name +
                                          "'");
    prev_name = name;
    const uint8_t dtype = r.u8();
    if (dtype != kDtypeF32)
      throw Error(ErrorKind::Corrupt, "checkpoint: unsupported dtype code " +
                                          std::to_string(dtype));
    const uint8_t rank = r.u8();
    Shape shape;
    for (uint8_t d = 0; d < rank; ++d) shape.push_back(int64_t(r.u32()));
    Tensor<float> tensor(shape);
    for (float& v : tensor.data) v = r.f32();
    data.tensors.emplace(std::move(name), std::move(tensor));
  }
  if (r.remaining() != 0)
    throw Error(ErrorKind::Corrupt, "checkpoint: trailing bytes after tensor table");
  return data;
}

CheckpointData load_checkpoint(const std::filesystem::path& path, ModelKind expected) {
  CheckpointData data = load_checkpoint(path);
  if (data.kind != expected)
    throw Error(ErrorKind::ModelKind, "checkpoint " + path.string() + " holds a " +
                                          model_kind_name(data.kind) + " model, expected " +
                                          model_kind_name(expected));
  return data;
}

}  // namespace recomp
