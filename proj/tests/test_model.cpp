#include <doctest.h>

#include <cstring>
#include <string>

#include "json.hpp"
#include "model_check.hpp"
#include "rawnet/errors.hpp"
#include "rawnet/model.hpp"
#include "test_util.hpp"

using namespace rawnet;
using nn::Mode;
using testutil::random_tensor;

namespace {

struct Parsed {
  nlohmann::json header;
  std::vector<std::uint8_t> payload;
};

// Splits a checkpoint into its JSON header and payload.
Parsed parse(const std::vector<std::uint8_t>& bytes) {
  std::string s(bytes.begin(), bytes.end());
  std::size_t pos = 0;
  for (int i = 0; i < 2; ++i) pos = s.find('\n', pos) + 1;
  const std::size_t nl = s.find('\n', pos);
  const std::size_t hb = std::stoul(s.substr(pos + std::strlen("header_bytes: "), nl - pos));
  pos = nl + 1;
  Parsed p;
  p.header = nlohmann::json::parse(s.substr(pos, hb));
  p.payload.assign(bytes.begin() + static_cast<long>(pos + hb + 1), bytes.end());
  return p;
}

std::vector<std::uint8_t> rebuild(const Parsed& p) {
  const std::string h = p.header.dump(1);
  const std::string head = "RAWNETLITE-CHECKPOINT\nversion: 1\nheader_bytes: " + std::to_string(h.size()) + "\n" + h + "\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  out.insert(out.end(), p.payload.begin(), p.payload.end());
  return out;
}

RawNetLiteConfig small() {
  RawNetLiteConfig c;
  c.channels = 6;
  c.n_res_blocks = 2;
  c.pool_len = 16;
  c.gru_hidden = 5;
  c.fc_hidden = 7;
  c.input_len = 800;
  c.seed = 3;
  return c;
}

Model trained_small() {
  Model m(small());
  auto x = random_tensor<float>({4, 1, 800}, 1);
  m.forward(x, Mode::train);  // populates BN statistics
  return m;
}

}  // namespace

TEST_CASE("default architecture size") {
  Model m(RawNetLiteConfig{});
  CHECK(m.parameter_count() == 240769);
  const auto params = m.parameters();
  CHECK(params.front()->name == "stem.conv.weight");
  CHECK(params.back()->name == "fc2.bias");
  CHECK(m.batchnorms().size() == 7);
}

TEST_CASE("config validation") {
  RawNetLiteConfig c;
  c.kernel = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.pool_len = 48001;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.channels = 0;
  CHECK_THROWS_AS(Model{c}, ConfigError);
}

TEST_CASE("initialization follows the seed") {
  Model a(small()), b(small());
  auto c = small();
  c.seed = 4;
  Model d(c);
  CHECK(a.parameters()[0]->values == b.parameters()[0]->values);
  CHECK(a.parameters()[0]->values != d.parameters()[0]->values);
}

TEST_CASE("zero output layer gives probability one half") {
  Model m = trained_small();
  std::fill(m.output_layer().weight.values.begin(), m.output_layer().weight.values.end(), 0.0f);
  auto x = random_tensor<float>({3, 1, 800}, 2);
  for (float p : m.forward(x, Mode::eval)) CHECK(p == 0.5f);
}

TEST_CASE("no residual blocks is a valid architecture") {
  auto c = small();
  c.n_res_blocks = 0;
  Model m(c);
  auto x = random_tensor<float>({2, 1, 800}, 3);
  const auto p = m.forward(x, Mode::train);
  CHECK(p.size() == 2);
  std::vector<float> g = {0.5f, -0.5f};
  m.backward(g);
  CHECK(testutil::model_gradcheck([] {
          auto r = testutil::reduced_config();
          r.n_res_blocks = 0;
          return r;
        }())
            .max_rel_error < 1e-4);
}

TEST_CASE("eval outputs do not depend on batch companions") {
  Model m = trained_small();
  auto x = random_tensor<float>({3, 1, 800}, 4);
  auto solo = nn::Tensor<float>({1, 1, 800});
  std::copy(x.data.begin() + 800, x.data.begin() + 1600, solo.data.begin());
  const auto batch = m.forward(x, Mode::eval);
  const auto one = m.forward(solo, Mode::eval);
  CHECK(batch[1] == one[0]);
  for (float p : batch) {
    CHECK(p > 0.0f);
    CHECK(p < 1.0f);
  }
}

TEST_CASE("eval before training is rejected; bad shapes are rejected") {
  Model m(small());
  auto x = random_tensor<float>({1, 1, 800}, 5);
  CHECK_THROWS_AS(m.forward(x, Mode::eval), UninitializedStatsError);
  auto bad = random_tensor<float>({1, 1, 799}, 5);
  CHECK_THROWS_AS(m.forward(bad, Mode::train), ShapeError);
  std::vector<float> g = {1.0f};
  Model fresh(small());
  CHECK_THROWS_AS(fresh.backward(g), ArgumentError);
}

TEST_CASE("end-to-end gradients match finite differences") {
  const auto res = testutil::model_gradcheck(testutil::reduced_config());
  CAPTURE(res.worst_param);
  CAPTURE(res.worst_analytic);
  CAPTURE(res.worst_numeric);
  CHECK(res.coords_checked > 300);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("float model agrees with the double model") {
  Model f = trained_small();
  RawNetLite<double> d(small());
  copy_weights(f, d);
  auto xf = random_tensor<float>({2, 1, 800}, 6);
  auto xd = random_tensor<double>({2, 1, 800}, 6);
  const auto pf = f.forward(xf, Mode::eval);
  const auto pd = d.forward(xd, Mode::eval);
  for (std::size_t i = 0; i < 2; ++i) CHECK(pf[i] == doctest::Approx(pd[i]).epsilon(1e-4));
}

TEST_CASE("checkpoint round trip is exact") {
  Model m = trained_small();
  const auto bytes = serialize_checkpoint(m, {7, 0.875});
  CheckpointMeta meta;
  Model r = deserialize_checkpoint(bytes, &meta);
  CHECK(meta.epoch == 7);
  CHECK(meta.best_val_f1 == 0.875);
  CHECK(r.config() == m.config());
  const auto a = m.parameters(), b = r.parameters();
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k]->values == b[k]->values);
  const auto ba = m.batchnorms(), bb = r.batchnorms();
  for (std::size_t k = 0; k < ba.size(); ++k) {
    CHECK(ba[k]->state.running_mean == bb[k]->state.running_mean);
    CHECK(ba[k]->state.running_var == bb[k]->state.running_var);
    CHECK(bb[k]->state.initialized);
  }
  auto x = random_tensor<float>({2, 1, 800}, 7);
  CHECK(m.forward(x, Mode::eval) == r.forward(x, Mode::eval));
  CHECK(serialize_checkpoint(r, meta) == bytes);

  testutil::TempDir dir("ckpt");
  save_checkpoint(m, {7, 0.875}, dir.path() / "m.rnl");
  Model f = load_checkpoint(dir.path() / "m.rnl");
  CHECK(f.parameters()[3]->values == a[3]->values);
}

TEST_CASE("checkpoint corruption is detected") {
  const auto bytes = serialize_checkpoint(trained_small(), {});

  SUBCASE("flipped payload byte") {
    auto b = bytes;
    b[b.size() - 10] ^= 0x01;
    CHECK_THROWS_AS(deserialize_checkpoint(b), IntegrityError);
  }
  SUBCASE("truncated payload") {
    auto b = bytes;
    b.resize(b.size() - 4);
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(b), doctest::Contains("truncated"), IntegrityError);
  }
  SUBCASE("bad magic") {
    auto b = bytes;
    b[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(b), CheckpointFormatError);
  }
  SUBCASE("unsupported version") {
    auto b = bytes;
    b[std::strlen("RAWNETLITE-CHECKPOINT\nversion: ")] = '9';
    CHECK_THROWS_AS(deserialize_checkpoint(b), CheckpointFormatError);
  }
  SUBCASE("edited tensor shape names the tensor") {
    auto p = parse(bytes);
    for (auto& t : p.header["tensors"])
      if (t["name"] == "fc1.weight") t["shape"] = {7, 9};
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(rebuild(p)), doctest::Contains("fc1.weight"), CheckpointFormatError);
  }
  SUBCASE("missing tensor") {
    auto p = parse(bytes);
    auto& ts = p.header["tensors"];
    for (std::size_t i = 0; i < ts.size(); ++i)
      if (ts[i]["name"] == "gru.bwd.w_hh") ts.erase(i);
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(rebuild(p)), doctest::Contains("gru.bwd.w_hh"), CheckpointFormatError);
  }
  SUBCASE("unexpected tensor") {
    auto p = parse(bytes);
    auto extra = p.header["tensors"][0];
    extra["name"] = "stem.extra";
    p.header["tensors"].push_back(extra);
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(rebuild(p)), doctest::Contains("stem.extra"), CheckpointFormatError);
  }
  SUBCASE("config mismatch between header and tensors") {
    auto p = parse(bytes);
    p.header["config"]["fc_hidden"] = 8;
    CHECK_THROWS_AS(deserialize_checkpoint(rebuild(p)), CheckpointFormatError);
  }
  SUBCASE("reparsed header is accepted") {
    CHECK_NOTHROW(deserialize_checkpoint(rebuild(parse(bytes))));
  }
}
