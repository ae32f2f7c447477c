// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>

#include <gtest/gtest.h>

#include "lcdoc/merge.hpp"
#include "support.hpp"

namespace lcdoc {
namespace {

using testing::TempDir;

Tensor vec(std::vector<double> values, DType dtype = DType::F64) {
  Tensor t;
  t.dtype = dtype;
  t.shape = {static_cast<std::int64_t>(values.size())};
  t.values = std::move(values);
  return t;
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

std::uint64_t ulp_distance(double a, double b) {
  std::int64_t ia, ib;
  std::memcpy(&ia, &a, sizeof ia);
  std::memcpy(&ib, &b, sizeof ib);
  if (ia < 0) ia = std::numeric_limits<std::int64_t>::min() - ia;
  if (ib < 0) ib = std::numeric_limits<std::int64_t>::min() - ib;
  return ia > ib ? static_cast<std::uint64_t>(ia - ib) : static_cast<std::uint64_t>(ib - ia);
}

TEST(TaskVector, HandArithmetic) {
  const auto v = task_vector({{"w", vec({1.5, 3.0})}}, {{"w", vec({0.5, 1.0})}});
  EXPECT_EQ(v.at("w").values, (std::vector<double>{1.0, 2.0}));
}

TEST(TaskVector, IdenticalMapsGiveZeros) {
  const WeightMap m{{"a", vec({0.1, -2.0, 7.5})}, {"b", vec({3.0})}};
  for (const auto& [_, t] : task_vector(m, m)) {
    for (double x : t.values) EXPECT_EQ(x, 0.0);
  }
}

TEST(TaskVector, MismatchNamesTheKey) {
  Tensor wide = vec({1.0, 2.0});
  wide.shape = {1, 2};
  try {
    task_vector({{"layer.7.weight", wide}}, {{"layer.7.weight", vec({1.0, 2.0})}});
    FAIL() << "expected an error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("layer.7.weight"), std::string::npos) << e.what();
  }
  EXPECT_ANY_THROW(task_vector({{"a", vec({1.0})}}, {{"b", vec({1.0})}}));
}

TEST(ApplyTaskVector, HandArithmetic) {
  const auto out = apply_task_vector({{"w", vec({1.0, 2.0})}}, {{"w", vec({1.0, 2.0})}}, 0.5);
  EXPECT_EQ(out.at("w").values, (std::vector<double>{1.5, 3.0}));
}

TEST(ApplyTaskVector, AlphaZeroIsBitIdentity) {
  Rng rng(4);
  WeightMap target, delta;
  for (int k = 0; k < 5; ++k) {
    std::vector<double> a, b;
    for (int i = 0; i < 64; ++i) {
      a.push_back((rng.uniform01() - 0.5) * 1e3);
      b.push_back(std::nan(""));  // even NaN deltas must not leak through
    }
    a[0] = -0.0;
    target["t" + std::to_string(k)] = vec(a);
    delta["t" + std::to_string(k)] = vec(b);
  }
  const auto out = apply_task_vector(target, delta, 0.0);
  for (const auto& [key, t] : target) {
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      EXPECT_TRUE(bit_equal(out.at(key).values[i], t.values[i]));
    }
  }
}

TEST(ApplyTaskVector, RoundTripWithinOneUlp) {
  Rng rng(19);
  WeightMap base, trained;
  for (int k = 0; k < 4; ++k) {
    std::vector<double> b, t;
    for (int i = 0; i < 500; ++i) {
      b.push_back((rng.uniform01() - 0.5) * 4.0);
      t.push_back(b.back() + (rng.uniform01() - 0.5) * 0.1);
    }
    base["k" + std::to_string(k)] = vec(b);
    trained["k" + std::to_string(k)] = vec(t);
  }
  const auto rebuilt = apply_task_vector(base, task_vector(trained, base), 1.0);
  for (const auto& [key, t] : trained) {
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      EXPECT_LE(ulp_distance(rebuilt.at(key).values[i], t.values[i]), 1u);
    }
  }
}

TEST(Safetensors, RoundTripAllDtypes) {
  WeightMap m;
  m["f64"] = vec({1.0 / 3.0, -2.5, 1e-300});
  m["f32"] = vec({0.25f, -1.5f, 3.0f}, DType::F32);
  m["f16"] = vec({0.5, -2.0, 65504.0}, DType::F16);
  m["bf16"] = vec({1.0, -0.5, 256.0}, DType::BF16);
  Tensor matrix = vec({1, 2, 3, 4, 5, 6}, DType::F32);
  matrix.shape = {2, 3};
  m["matrix"] = matrix;
  TempDir dir;
  save_safetensors(dir / "w.safetensors", m, {{"format", "pt"}});
  const auto back = load_safetensors(dir / "w.safetensors");
  EXPECT_EQ(back, m);
}

TEST(Safetensors, RejectsTruncatedBuffer) {
  const auto bytes = serialize_safetensors({{"a", vec({1.0, 2.0})}});
  EXPECT_ANY_THROW(parse_safetensors(std::string_view(bytes).substr(0, bytes.size() - 3)));
  EXPECT_ANY_THROW(parse_safetensors("abc"));
}

TEST(Presets, BuiltinAndConfigFileAgree) {
  const auto builtin = MergePresets::builtin();
  EXPECT_EQ(builtin.alpha_for(std::nullopt), 0.25);
  EXPECT_EQ(builtin.alpha_for("mistral_cpt"), 0.5);
  const auto file = MergePresets::load(std::filesystem::path(LCDOC_FIXTURE_DIR) / ".." / ".." / "config" /
                                       "merge_presets.json");
  EXPECT_EQ(file.alphas, builtin.alphas);
  EXPECT_THROW(builtin.alpha_for("unknown"), std::invalid_argument);
}

TEST(Presets, FileNeedsDefault) {
  TempDir dir;
  write_file(dir / "p.json", R"({"other": 0.3})");
  EXPECT_THROW(MergePresets::load(dir / "p.json"), std::invalid_argument);
}

TEST(RunMerge, RecipeEndToEnd) {
  TempDir dir;
  save_safetensors(dir / "target.safetensors", {{"w", vec({1.0, 2.0}, DType::F32)}});
  save_safetensors(dir / "base.safetensors", {{"w", vec({0.5, 1.0}, DType::F32)}});
  save_safetensors(dir / "trained.safetensors", {{"w", vec({1.5, 3.0}, DType::F32)}});
  const auto recipe = MergeRecipe::from_json(
      json{{"target", "target.safetensors"}, {"base", "base.safetensors"},
           {"trained", "trained.safetensors"}, {"preset", "mistral_cpt"},
           {"output_path", "out.safetensors"}},
      dir.path());
  const auto summary = run_merge(recipe, MergePresets::builtin());
  EXPECT_EQ(summary.alpha, 0.5);
  EXPECT_EQ(summary.tensors, 1u);
  EXPECT_EQ(summary.elements, 2u);
  const auto out = load_safetensors(dir / "out.safetensors");
  EXPECT_EQ(out.at("w").values, (std::vector<double>{1.5, 3.0}));
  EXPECT_EQ(out.at("w").dtype, DType::F32);
}

TEST(RunMerge, ExplicitAlphaWins) {
  MergeRecipe r;
  r.alpha = 0.1;
  r.preset = "mistral_cpt";
  EXPECT_EQ(r.resolve_alpha(MergePresets::builtin()), 0.1);
  MergeRecipe d;
  EXPECT_EQ(d.resolve_alpha(MergePresets::builtin()), 0.25);
}

}  // namespace
}  // namespace lcdoc
