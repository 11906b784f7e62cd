#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "helpers.hpp"
#include "mmfuse/encoders.hpp"
#include "mmfuse/rng.hpp"
#include "mmfuse/tensor.hpp"

using namespace mmfuse;
using testutil::max_param_fd_err;
using testutil::proj_loss;

namespace {

EncoderConfig tiny_config() {
    EncoderConfig config;
    config.vocab_size = 8;
    config.max_seq = 5;
    config.d_model = 8;
    config.heads = 2;
    config.blocks = 1;
    config.segments = 2;
    config.image_side = 4;
    config.patch_side = 2;
    config.proj_dim = 3;
    return config;
}

}  // namespace

TEST_SUITE("encoders") {

TEST_CASE("config validation names the violated invariant") {
    EncoderConfig config;
    config.d_model = 30;
    CHECK_THROWS_WITH_AS(config.validate(), doctest::Contains("d_model"),
                         std::invalid_argument);

    config = EncoderConfig{};
    config.image_side = 15;
    CHECK_THROWS_WITH_AS(config.validate(), doctest::Contains("image_side"),
                         std::invalid_argument);

    config = EncoderConfig{};
    config.vocab_size = 2;
    CHECK_THROWS_WITH_AS(config.validate(), doctest::Contains("vocab_size"),
                         std::invalid_argument);

    config = EncoderConfig{};
    config.proj_dim = 0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);

    CHECK_NOTHROW(EncoderConfig{}.validate());
}

TEST_CASE("default config shape arithmetic") {
    const EncoderConfig config;
    CHECK(config.ffn_hidden() == 128);
    CHECK(config.grid_side() == 4);
    CHECK(config.patch_count() == 16);
}

TEST_CASE("patch extraction index arithmetic") {
    Tensor image({16, 16});
    for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < 16; ++c) image.at(r, c) = 16.0 * r + c;

    const Tensor patches = extract_patches(image, 4);
    REQUIRE(patches.shape() == std::vector<std::size_t>{16, 16});

    // patch 5 sits at grid cell (1,1): image rows 4..7, cols 4..7
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b)
            CHECK(patches.at(5, a * 4 + b) == 16.0 * (4 + a) + (4 + b));
}

TEST_CASE("patch extraction and assembly form a bijection") {
    Rng rng(14);
    const Tensor image = rng_uniform(rng, {16, 16}, 0.0, 1.0);
    const Tensor back = assemble_patches(extract_patches(image, 4), 16, 4);
    for (std::size_t i = 0; i < image.size(); ++i) CHECK(back[i] == image[i]);
}

TEST_CASE("patch extraction validates its input") {
    CHECK_THROWS_AS(extract_patches(Tensor({4, 6}), 2), std::invalid_argument);
    CHECK_THROWS_AS(extract_patches(Tensor({6, 6}), 4), std::invalid_argument);
}

TEST_CASE("text encoder accepts an empty token list") {
    Rng rng(15);
    auto [text, image] = init_encoders(tiny_config(), rng);
    const Tensor out = text.forward({});
    REQUIRE(out.shape() == std::vector<std::size_t>{3});
    CHECK(all_finite(out));
}

TEST_CASE("text encoder is deterministic") {
    Rng rng(16);
    auto [text, image] = init_encoders(tiny_config(), rng);
    const Tensor a = text.forward({3, 4, 2});
    const Tensor b = text.forward({3, 4, 2});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("padding never changes the encoding") {
    Rng rng(17);
    EncoderConfig config = tiny_config();
    config.max_seq = 12;
    auto [text, image] = init_encoders(config, rng);

    const Tensor bare = text.forward({5, 6});
    std::vector<int> padded = {5, 6};
    while (padded.size() < config.max_seq) padded.push_back(kPadTokenId);
    const Tensor full = text.forward(padded);

    REQUIRE(bare.size() == full.size());
    for (std::size_t i = 0; i < bare.size(); ++i)
        CHECK(std::fabs(bare[i] - full[i]) <= 1e-9);
}

TEST_CASE("text encoder validates tokens") {
    Rng rng(18);
    auto [text, image] = init_encoders(tiny_config(), rng);
    CHECK_THROWS_WITH_AS(text.forward({3, kClsTokenId}), doctest::Contains("reserved"),
                         std::invalid_argument);
    CHECK_THROWS_AS(text.forward({99}), std::invalid_argument);
    CHECK_THROWS_AS(text.forward({3, 4, 5, 6, 7, 2}), std::invalid_argument);  // > max_seq
    CHECK_THROWS_AS(text.forward({3, 4}, {0}), std::invalid_argument);  // length mismatch
    CHECK_THROWS_AS(text.forward({3, 4}, {0, 2}), std::invalid_argument);  // segment id range
}

TEST_CASE("segment ids influence the encoding when segments is two") {
    Rng rng(19);
    auto [text, image] = init_encoders(tiny_config(), rng);
    const Tensor a = text.forward({3, 4, 5}, {0, 0, 0});
    const Tensor b = text.forward({3, 4, 5}, {0, 1, 1});
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::fabs(a[i] - b[i]));
    CHECK(diff > 1e-12);

    const Tensor c = text.forward({3, 4, 5});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(c[i] == a[i]);  // empty means all zero
}

TEST_CASE("image encoder output shape and determinism") {
    Rng rng(20);
    auto [text, image_enc] = init_encoders(tiny_config(), rng);
    Rng data_rng(21);
    const Tensor img = rng_uniform(data_rng, {4, 4}, 0.0, 1.0);
    const Tensor a = image_enc.forward(img);
    const Tensor b = image_enc.forward(img);
    REQUIRE(a.shape() == std::vector<std::size_t>{3});
    CHECK(all_finite(a));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("image encoder validates shape and finiteness") {
    Rng rng(22);
    auto [text, image_enc] = init_encoders(tiny_config(), rng);
    CHECK_THROWS_AS(image_enc.forward(Tensor({4, 5})), std::invalid_argument);
    CHECK_THROWS_AS(image_enc.forward(Tensor({8, 8})), std::invalid_argument);
    Tensor bad({4, 4});
    bad[3] = std::nan("");
    CHECK_THROWS_AS(image_enc.forward(bad), std::invalid_argument);
}

TEST_CASE("initialization is deterministic and sets the affine defaults") {
    const EncoderConfig config = tiny_config();
    Rng a(23);
    Rng b(23);
    auto [text_a, image_a] = init_encoders(config, a);
    auto [text_b, image_b] = init_encoders(config, b);

    ParamRefs pa, pb;
    text_a.collect_params("text", pa);
    image_a.collect_params("image", pa);
    text_b.collect_params("text", pb);
    image_b.collect_params("image", pb);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t k = 0; k < pa.size(); ++k) {
        CHECK(pa[k].first == pb[k].first);
        REQUIRE(pa[k].second->value.size() == pb[k].second->value.size());
        for (std::size_t i = 0; i < pa[k].second->value.size(); ++i)
            CHECK(pa[k].second->value[i] == pb[k].second->value[i]);
    }

    for (const auto& [name, p] : pa) {
        if (name.find("gain") != std::string::npos) {
            for (std::size_t i = 0; i < p->value.size(); ++i) CHECK(p->value[i] == 1.0);
        }
        if (name.find("ln") != std::string::npos && name.find("bias") != std::string::npos) {
            for (std::size_t i = 0; i < p->value.size(); ++i) CHECK(p->value[i] == 0.0);
        }
    }
}

TEST_CASE("initial weight spread matches the configured scale") {
    EncoderConfig config = tiny_config();
    config.vocab_size = 4096;
    config.d_model = 32;
    config.heads = 2;
    Rng rng(24);
    auto [text, image] = init_encoders(config, rng);

    const Tensor& table = text.token_table.table.value;  // 4096 x 32 entries
    REQUIRE(table.size() >= 10000);
    double m = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < table.size(); ++i) {
        m += table[i];
        sq += table[i] * table[i];
    }
    m /= static_cast<double>(table.size());
    const double sd = std::sqrt(sq / static_cast<double>(table.size()) - m * m);
    CHECK(std::fabs(m) < 5e-4);
    CHECK(sd > 0.018);
    CHECK(sd < 0.022);
}

TEST_CASE("text encoder gradient check") {
    Rng rng(25);
    auto [text, image] = init_encoders(tiny_config(), rng);
    const std::vector<int> tokens = {3, 4, 2};
    const std::vector<int> segments = {0, 1, 0};
    Rng wrng(26);
    const Tensor w = rng_normal(wrng, {3});

    text.forward(tokens, segments);
    Tensor grad_out = w;
    text.backward(grad_out);
    auto loss = [&] { return proj_loss(text.forward(tokens, segments), w); };
    ParamRefs params;
    text.collect_params("text", params);
    CHECK(max_param_fd_err(params, loss) <= 1e-5);
}

TEST_CASE("image encoder gradient check") {
    Rng rng(27);
    auto [text, image_enc] = init_encoders(tiny_config(), rng);
    Rng data_rng(28);
    const Tensor img = rng_uniform(data_rng, {4, 4}, 0.0, 1.0);
    const Tensor w = rng_normal(data_rng, {3});

    image_enc.forward(img);
    Tensor grad_out = w;
    image_enc.backward(grad_out);
    auto loss = [&] { return proj_loss(image_enc.forward(img), w); };
    ParamRefs params;
    image_enc.collect_params("image", params);
    CHECK(max_param_fd_err(params, loss) <= 1e-5);
}

TEST_CASE("encoder backward requires a forward pass") {
    Rng rng(29);
    auto [text, image_enc] = init_encoders(tiny_config(), rng);
    CHECK_THROWS_AS(text.backward(Tensor({3})), std::logic_error);
    CHECK_THROWS_AS(image_enc.backward(Tensor({3})), std::logic_error);
}

}  // TEST_SUITE
