// SPDX-License-Identifier: Apache-2.0

#include "lcdoc/merge.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <stdexcept>

#include <fmt/format.h>

namespace lcdoc {

std::string to_string(DType dtype) {
  switch (dtype) {
    case DType::F16: return "F16";
    case DType::BF16: return "BF16";
    case DType::F32: return "F32";
    case DType::F64: return "F64";
  }
  return "F32";
}

DType dtype_from_string(const std::string& s) {
  if (s == "F16") return DType::F16;
  if (s == "BF16") return DType::BF16;
  if (s == "F32") return DType::F32;
  if (s == "F64") return DType::F64;
  throw std::invalid_argument(fmt::format("unsupported tensor dtype '{}'", s));
}

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::F16:
    case DType::BF16: return 2;
    case DType::F32: return 4;
    case DType::F64: return 8;
  }
  return 4;
}

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

namespace {

void check_compatible(const WeightMap& a, const WeightMap& b, const char* a_name,
                      const char* b_name) {
  for (const auto& [key, ta] : a) {
    auto it = b.find(key);
    if (it == b.end()) {
      throw std::invalid_argument(fmt::format("key '{}' is in {} but not in {}", key, a_name, b_name));
    }
    if (ta.shape != it->second.shape) {
      throw std::invalid_argument(fmt::format("shape mismatch on key '{}': [{}] vs [{}]", key,
                                              fmt::join(ta.shape, ", "),
                                              fmt::join(it->second.shape, ", ")));
    }
    if (ta.values.size() != ta.numel() || it->second.values.size() != ta.numel()) {
      throw std::invalid_argument(fmt::format("key '{}': value count does not match shape", key));
    }
  }
  for (const auto& [key, _] : b) {
    if (a.count(key) == 0) {
      throw std::invalid_argument(fmt::format("key '{}' is in {} but not in {}", key, b_name, a_name));
    }
  }
}

WeightMap combine(const WeightMap& a, const WeightMap& b,
                  const std::function<double(double, double)>& op) {
  WeightMap out;
  for (const auto& [key, ta] : a) {
    const auto& tb = b.at(key);
    Tensor t{ta.dtype, ta.shape, {}};
    t.values.resize(ta.values.size());
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      const double v = op(ta.values[i], tb.values[i]);
      if (!std::isfinite(v)) {
        throw std::domain_error(fmt::format("non-finite result in key '{}' at element {}", key, i));
      }
      t.values[i] = v;
    }
    out.emplace(key, std::move(t));
  }
  return out;
}

// IEEE half and bfloat16 conversions, round to nearest even.

std::uint16_t float_to_half(float f) {
  std::uint32_t x;
  std::memcpy(&x, &f, 4);
  const std::uint32_t sign = (x >> 16) & 0x8000u;
  const std::uint32_t exp = (x >> 23) & 0xffu;
  std::uint32_t mant = x & 0x7fffffu;
  if (exp == 0xff) return static_cast<std::uint16_t>(sign | 0x7c00u | (mant ? 0x200u : 0u));
  int e = static_cast<int>(exp) - 127 + 15;
  if (e >= 0x1f) return static_cast<std::uint16_t>(sign | 0x7c00u);
  if (e <= 0) {
    if (e < -10) return static_cast<std::uint16_t>(sign);
    mant |= 0x800000u;
    const int shift = 14 - e;
    std::uint32_t half = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1);
    const std::uint32_t mid = 1u << (shift - 1);
    if (rem > mid || (rem == mid && (half & 1u))) ++half;
    return static_cast<std::uint16_t>(sign | half);
  }
  std::uint32_t half = (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
  const std::uint32_t rem = mant & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;
  return static_cast<std::uint16_t>(sign | half);
}

float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exp = (h >> 10) & 0x1fu;
  std::uint32_t mant = h & 0x3ffu;
  std::uint32_t x;
  if (exp == 0) {
    if (mant == 0) {
      x = sign;
    } else {
      int e = -1;
      do {
        ++e;
        mant <<= 1;
      } while ((mant & 0x400u) == 0);
      x = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | ((mant & 0x3ffu) << 13);
    }
  } else if (exp == 0x1f) {
    x = sign | 0x7f800000u | (mant << 13);
  } else {
    x = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  float f;
  std::memcpy(&f, &x, 4);
  return f;
}

std::uint16_t float_to_bf16(float f) {
  std::uint32_t x;
  std::memcpy(&x, &f, 4);
  if ((x & 0x7fffffffu) > 0x7f800000u) return static_cast<std::uint16_t>((x >> 16) | 0x40u);
  const std::uint32_t lsb = (x >> 16) & 1u;
  x += 0x7fffu + lsb;
  return static_cast<std::uint16_t>(x >> 16);
}

float bf16_to_float(std::uint16_t b) {
  const std::uint32_t x = static_cast<std::uint32_t>(b) << 16;
  float f;
  std::memcpy(&f, &x, 4);
  return f;
}

template <typename T>
T read_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void append_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

}  // namespace

WeightMap task_vector(const WeightMap& trained, const WeightMap& base) {
  check_compatible(trained, base, "trained", "base");
  return combine(trained, base, [](double t, double b) { return t - b; });
}

WeightMap apply_task_vector(const WeightMap& target, const WeightMap& vector, double alpha) {
  if (!std::isfinite(alpha)) throw std::invalid_argument("alpha must be finite");
  check_compatible(target, vector, "target", "task vector");
  if (alpha == 0.0) return target;
  return combine(target, vector, [alpha](double t, double v) { return t + alpha * v; });
}

WeightMap parse_safetensors(std::string_view bytes) {
  if (bytes.size() < 8) throw std::runtime_error("safetensors: file shorter than its header length");
  const auto header_len = read_le<std::uint64_t>(bytes.data());
  if (header_len > bytes.size() - 8) throw std::runtime_error("safetensors: header runs past end of file");
  const auto header = json::parse(bytes.substr(8, header_len));
  const std::string_view data = bytes.substr(8 + header_len);

  WeightMap out;
  for (const auto& [name, info] : header.items()) {
    if (name == "__metadata__") continue;
    Tensor t;
    t.dtype = dtype_from_string(info.at("dtype").get<std::string>());
    t.shape = info.at("shape").get<std::vector<std::int64_t>>();
    const auto offsets = info.at("data_offsets").get<std::vector<std::uint64_t>>();
    if (offsets.size() != 2 || offsets[0] > offsets[1] || offsets[1] > data.size()) {
      throw std::runtime_error(fmt::format("safetensors: bad data offsets for '{}'", name));
    }
    const auto n = t.numel();
    const auto width = dtype_size(t.dtype);
    if (offsets[1] - offsets[0] != n * width) {
      throw std::runtime_error(
          fmt::format("safetensors: '{}' holds {} bytes, shape needs {}", name,
                      offsets[1] - offsets[0], n * width));
    }
    t.values.resize(n);
    const char* p = data.data() + offsets[0];
    for (std::size_t i = 0; i < n; ++i, p += width) {
      switch (t.dtype) {
        case DType::F16: t.values[i] = half_to_float(read_le<std::uint16_t>(p)); break;
        case DType::BF16: t.values[i] = bf16_to_float(read_le<std::uint16_t>(p)); break;
        case DType::F32: t.values[i] = read_le<float>(p); break;
        case DType::F64: t.values[i] = read_le<double>(p); break;
      }
    }
    out.emplace(name, std::move(t));
  }
  return out;
}

std::string serialize_safetensors(const WeightMap& weights,
                                  const std::map<std::string, std::string>& metadata) {
  json header = json::object();
  std::string data;
  for (const auto& [name, t] : weights) {
    if (t.values.size() != t.numel()) {
      throw std::invalid_argument(fmt::format("tensor '{}': value count does not match shape", name));
    }
    const auto begin = data.size();
    for (double v : t.values) {
      switch (t.dtype) {
        case DType::F16: append_le(data, float_to_half(static_cast<float>(v))); break;
        case DType::BF16: append_le(data, float_to_bf16(static_cast<float>(v))); break;
        case DType::F32: append_le(data, static_cast<float>(v)); break;
        case DType::F64: append_le(data, v); break;
      }
    }
    header[name] = {{"dtype", to_string(t.dtype)},
                    {"shape", t.shape},
                    {"data_offsets", {begin, data.size()}}};
  }
  if (!metadata.empty()) header["__metadata__"] = metadata;
  std::string head = header.dump();
  while (head.size() % 8 != 0) head.push_back(' ');
  std::string out;
  append_le(out, static_cast<std::uint64_t>(head.size()));
  out += head;
  out += data;
  return out;
}

WeightMap load_safetensors(const std::filesystem::path& path) {
  try {
    return parse_safetensors(read_file(path));
  } catch (const json::exception& e) {
    throw std::runtime_error(fmt::format("{}: malformed safetensors header: {}", path.string(), e.what()));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void save_safetensors(const std::filesystem::path& path, const WeightMap& weights,
                      const std::map<std::string, std::string>& metadata) {
  write_file(path, serialize_safetensors(weights, metadata));
}

MergePresets MergePresets::builtin() { return MergePresets{{{"default", 0.25}, {"mistral_cpt", 0.5}}}; }

MergePresets MergePresets::load(const std::filesystem::path& path) {
  const auto j = json::parse(read_file(path));
  MergePresets p;
  for (const auto& [name, value] : j.items()) {
    if (!value.is_number()) {
      throw std::invalid_argument(fmt::format("{}: preset '{}' is not a number", path.string(), name));
    }
    p.alphas[name] = value.get<double>();
  }
  if (p.alphas.count("default") == 0) {
    throw std::invalid_argument(fmt::format("{}: no \"default\" preset", path.string()));
  }
  return p;
}

double MergePresets::alpha_for(const std::optional<std::string>& preset) const {
  const auto name = preset.value_or("default");
  auto it = alphas.find(name);
  if (it == alphas.end()) throw std::invalid_argument(fmt::format("unknown merge preset '{}'", name));
  return it->second;
}

MergeRecipe MergeRecipe::from_json(const json& j, const std::filesystem::path& relative_to) {
  auto path = [&](const char* key) {
    std::filesystem::path p = j.at(key).get<std::string>();
    return p.is_relative() && !relative_to.empty() ? relative_to / p : p;
  };
  MergeRecipe r;
  r.target = path("target");
  r.base = path("base");
  r.trained = path("trained");
  r.output_path = path("output_path");
  if (j.contains("alpha") && !j.at("alpha").is_null()) r.alpha = j.at("alpha").get<double>();
  if (j.contains("preset") && !j.at("preset").is_null()) r.preset = j.at("preset").get<std::string>();
  return r;
}

double MergeRecipe::resolve_alpha(const MergePresets& presets) const {
  return alpha ? *alpha : presets.alpha_for(preset);
}

MergeSummary run_merge(const MergeRecipe& recipe, const MergePresets& presets) {
  const double alpha = recipe.resolve_alpha(presets);
  const auto target = load_safetensors(recipe.target);
  const auto vec = task_vector(load_safetensors(recipe.trained), load_safetensors(recipe.base));
  const auto merged = apply_task_vector(target, vec, alpha);
  save_safetensors(recipe.output_path, merged, {{"merge_alpha", fmt::format("{}", alpha)}});
  MergeSummary s;
  s.alpha = alpha;
  s.tensors = merged.size();
  for (const auto& [_, t] : merged) s.elements += t.values.size();
  return s;
}

}  // namespace lcdoc
