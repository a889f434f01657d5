#include <algorithm>
#include <cstring>

#include <zlib.h>

#include "roadflood/detail/io.hpp"
#include "roadflood/error.hpp"
#include "roadflood/model_opt.hpp"

namespace roadflood::opt {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'R', 'F', 'P', 'M'};
constexpr std::size_t kPrefixBytes = 4 + 4 + 8;

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large payloads in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const auto n = static_cast<uInt>(std::min(kChunk, bytes.size() - off));
    crc = crc32(crc, bytes.data() + off, n);
  }
  return static_cast<std::uint32_t>(crc);
}

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw FormatError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void encode_payload(const StoredTensor& t, std::vector<std::uint8_t>& out) {
  switch (t.encoding) {
    case Encoding::kDenseF32:
      for (float v : t.values) detail::put_le(out, v);
      break;
    case Encoding::kSparse:
      for (std::size_t i = 0; i < t.values.size(); ++i) {
        // Compare bit patterns so -0.0f survives the round trip.
        std::uint32_t bits;
        std::memcpy(&bits, &t.values[i], sizeof bits);
        if (bits == 0) continue;
        detail::put_le(out, static_cast<std::uint32_t>(i));
        detail::put_le(out, t.values[i]);
      }
      break;
    case Encoding::kQuantI8:
      for (std::int8_t v : t.quant.values) out.push_back(static_cast<std::uint8_t>(v));
      break;
  }
}

StoredTensor decode_payload(const json& entry, std::span<const std::uint8_t> payload) {
  StoredTensor t;
  t.name = entry.at("name").get<std::string>();
  t.shape = entry.at("shape").get<std::vector<int>>();
  t.encoding = encoding_from_name(entry.at("encoding").get<std::string>());
  const auto offset = entry.at("offset").get<std::size_t>();
  const auto length = entry.at("length").get<std::size_t>();
  if (offset > payload.size() || length > payload.size() - offset) {
    throw FormatError("tensor " + t.name + " payload lies outside the container");
  }
  const auto* p = payload.data() + offset;
  const std::size_t n = element_count(t.shape);
  switch (t.encoding) {
    case Encoding::kDenseF32:
      if (length != n * 4) throw FormatError("tensor " + t.name + " has wrong dense payload length");
      t.values.resize(n);
      for (std::size_t i = 0; i < n; ++i) t.values[i] = detail::get_le<float>(p + 4 * i);
      break;
    case Encoding::kSparse: {
      if (length % 8 != 0) throw FormatError("tensor " + t.name + " has ragged sparse payload");
      t.values.assign(n, 0.0f);
      for (std::size_t k = 0; k < length / 8; ++k) {
        const auto idx = detail::get_le<std::uint32_t>(p + 8 * k);
        if (idx >= n) throw FormatError("tensor " + t.name + " sparse index out of range");
        t.values[idx] = detail::get_le<float>(p + 8 * k + 4);
      }
      break;
    }
    case Encoding::kQuantI8:
      if (length != n) throw FormatError("tensor " + t.name + " has wrong quantized payload length");
      t.quant.name = t.name;
      t.quant.shape = t.shape;
      t.quant.scale = entry.at("scale").get<float>();
      if (!(t.quant.scale > 0.0f)) throw FormatError("tensor " + t.name + " has non-positive scale");
      t.quant.values.resize(n);
      for (std::size_t i = 0; i < n; ++i) t.quant.values[i] = static_cast<std::int8_t>(p[i]);
      break;
  }
  return t;
}

}  // namespace

std::string encoding_name(Encoding e) {
  switch (e) {
    case Encoding::kDenseF32:
      return "f32";
    case Encoding::kSparse:
      return "sparse";
    case Encoding::kQuantI8:
      return "q8";
  }
  return "f32";
}

Encoding encoding_from_name(const std::string& name) {
  if (name == "f32") return Encoding::kDenseF32;
  if (name == "sparse") return Encoding::kSparse;
  if (name == "q8") return Encoding::kQuantI8;
  throw FormatError("unknown tensor encoding '" + name + "'");
}

ModelParams StoredModel::params() const {
  ModelParams p;
  for (const auto& t : tensors) {
    if (t.encoding == Encoding::kQuantI8) {
      p.tensors.push_back({t.name, t.shape, dequantize(t.quant)});
    } else {
      p.tensors.push_back({t.name, t.shape, t.values});
    }
  }
  return p;
}

StoredModel make_stored(const ModelConfig& cfg, const ModelParams& params, Encoding encoding) {
  if (encoding == Encoding::kQuantI8) {
    const auto q = quantize_params(params);
    return make_stored(cfg, q);
  }
  StoredModel m;
  m.config = cfg;
  for (const auto& t : params.tensors) m.tensors.push_back({t.name, t.shape, encoding, t.values, {}});
  return m;
}

StoredModel make_stored(const ModelConfig& cfg, std::span<const QuantTensor> qts) {
  StoredModel m;
  m.config = cfg;
  for (const auto& q : qts) m.tensors.push_back({q.name, q.shape, Encoding::kQuantI8, {}, q});
  return m;
}

std::size_t payload_bytes(const StoredTensor& t) {
  switch (t.encoding) {
    case Encoding::kDenseF32:
      return t.values.size() * 4;
    case Encoding::kSparse: {
      std::size_t nnz = 0;
      for (float v : t.values) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        nnz += bits != 0;
      }
      return nnz * 8;
    }
    case Encoding::kQuantI8:
      return t.quant.values.size();
  }
  return 0;
}

std::vector<std::uint8_t> serialize_model(const StoredModel& model) {
  std::vector<std::uint8_t> payload;
  json index = json::array();
  for (const auto& t : model.tensors) {
    if (element_count(t.shape) != (t.encoding == Encoding::kQuantI8 ? t.quant.values.size() : t.values.size())) {
      throw InvalidArgument("tensor " + t.name + " shape does not match its values");
    }
    const std::size_t offset = payload.size();
    encode_payload(t, payload);
    json entry{{"name", t.name},
               {"shape", t.shape},
               {"encoding", encoding_name(t.encoding)},
               {"offset", offset},
               {"length", payload.size() - offset}};
    if (t.encoding == Encoding::kQuantI8) entry["scale"] = t.quant.scale;
    index.push_back(entry);
  }
  const std::string header = json{{"model_config", segnet::to_json(model.config)}, {"tensors", index}}.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kPrefixBytes + header.size() + payload.size() + 4);
  out.insert(out.end(), kMagic, kMagic + 4);
  detail::put_le(out, kContainerVersion);
  detail::put_le(out, static_cast<std::uint64_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  detail::put_le(out, crc32_of(payload));
  return out;
}

StoredModel deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPrefixBytes + 4) throw FormatError("model container is truncated");
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) throw FormatError("bad magic: not a model container");
  const auto version = detail::get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kContainerVersion) {
    throw FormatError("unsupported model container version " + std::to_string(version));
  }
  const auto header_len = detail::get_le<std::uint64_t>(bytes.data() + 8);
  if (header_len > bytes.size() - kPrefixBytes - 4) throw FormatError("model container is truncated");
  const auto payload_begin = kPrefixBytes + static_cast<std::size_t>(header_len);
  const auto payload = bytes.subspan(payload_begin, bytes.size() - payload_begin - 4);
  const auto stored_crc = detail::get_le<std::uint32_t>(bytes.data() + bytes.size() - 4);
  if (crc32_of(payload) != stored_crc) throw FormatError("model container checksum mismatch");

  json header;
  try {
    header = json::parse(bytes.begin() + kPrefixBytes, bytes.begin() + static_cast<std::ptrdiff_t>(payload_begin));
  } catch (const json::exception& e) {
    throw FormatError(std::string("model header: ") + e.what());
  }
  StoredModel m;
  try {
    m.config = segnet::model_config_from_json(header.at("model_config"));
    for (const auto& entry : header.at("tensors")) m.tensors.push_back(decode_payload(entry, payload));
  } catch (const json::exception& e) {
    throw FormatError(std::string("model header: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("model header: ") + e.what());
  }
  return m;
}

void save_model(const StoredModel& model, const std::filesystem::path& path) {
  detail::write_file(path, serialize_model(model));
}

void save_model(const ModelConfig& cfg, const ModelParams& params, const std::filesystem::path& path,
                Encoding encoding) {
  save_model(make_stored(cfg, params, encoding), path);
}

StoredModel load_model(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  try {
    return deserialize_model(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

SizeReport size_report(const ModelConfig& cfg, const ModelParams& params) {
  SizeReport r;
  std::size_t kernel_values = 0;
  std::size_t kernel_zeros = 0;
  for (const auto& t : params.tensors) {
    TensorSize ts;
    ts.name = t.name;
    ts.count = t.values.size();
    ts.nonzero = static_cast<std::size_t>(std::count_if(t.values.begin(), t.values.end(), [](float v) { return v != 0.0f; }));
    ts.sparsity = ts.count ? 1.0 - static_cast<double>(ts.nonzero) / static_cast<double>(ts.count) : 0.0;
    if (t.is_kernel()) {
      kernel_values += ts.count;
      kernel_zeros += ts.count - ts.nonzero;
    }
    r.tensors.push_back(ts);
  }
  r.kernel_sparsity = kernel_values ? static_cast<double>(kernel_zeros) / static_cast<double>(kernel_values) : 0.0;

  auto measure = [&](Encoding e, std::size_t& payload, std::size_t& file) {
    const auto stored = make_stored(cfg, params, e);
    payload = 0;
    for (const auto& t : stored.tensors) payload += payload_bytes(t);
    file = serialize_model(stored).size();
  };
  measure(Encoding::kDenseF32, r.dense_f32_payload, r.dense_f32_file);
  measure(Encoding::kSparse, r.sparse_payload, r.sparse_file);
  measure(Encoding::kQuantI8, r.quantized_i8_payload, r.quantized_i8_file);
  return r;
}

json to_json(const SizeReport& r) {
  json tensors = json::array();
  for (const auto& t : r.tensors) {
    tensors.push_back({{"name", t.name}, {"count", t.count}, {"nonzero", t.nonzero}, {"sparsity", t.sparsity}});
  }
  return json{{"payload_bytes",
               {{"dense_f32", r.dense_f32_payload}, {"sparse", r.sparse_payload}, {"quantized_i8", r.quantized_i8_payload}}},
              {"file_bytes", {{"dense_f32", r.dense_f32_file}, {"sparse", r.sparse_file}, {"quantized_i8", r.quantized_i8_file}}},
              {"kernel_sparsity", r.kernel_sparsity},
              {"tensors", tensors}};
}

}  // namespace roadflood::opt
