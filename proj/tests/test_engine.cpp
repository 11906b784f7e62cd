#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "mmfuse/data.hpp"
#include "mmfuse/engine.hpp"

#include <json.hpp>

using namespace mmfuse;

namespace {

Dataset labeled_embedding_set(const std::vector<std::size_t>& class_counts, std::size_t d,
                              std::uint64_t seed) {
    Dataset data;
    Rng rng(seed);
    for (int c = 0; c < kNumClasses; ++c) {
        for (std::size_t i = 0; i < class_counts[static_cast<std::size_t>(c)]; ++i) {
            EmbeddingSample s;
            s.id = "s" + std::to_string(data.embedding.size());
            s.t = rng_normal(rng, {d});
            s.v = rng_normal(rng, {d});
            s.label = c;
            data.embedding.push_back(std::move(s));
        }
    }
    return data;
}

TrainConfig quick_config(std::size_t epochs) {
    TrainConfig config;
    config.epochs = epochs;
    return config;
}

}  // namespace

TEST_SUITE("engine") {

TEST_CASE("an empty json object yields the default config") {
    const TrainConfig config = train_config_from_json("{}");
    CHECK(config.epochs == 30);
    CHECK(config.batch_size == 32);
    CHECK(config.learning_rate == 1e-3);
    CHECK(config.adam_beta1 == 0.9);
    CHECK(config.adam_beta2 == 0.999);
    CHECK(config.adam_eps == 1e-8);
    CHECK(config.seed == 0);
    CHECK(config.train_fraction == 0.8);
    CHECK(config.fusion == FusionKind::TensorProduct);
    CHECK(config.head_hidden == 32);
}

TEST_CASE("partial overrides keep the remaining defaults") {
    const TrainConfig config =
        train_config_from_json("{\"epochs\": 3, \"learning_rate\": 0.05, "
                               "\"fusion\": \"concat\", \"seed\": 9}");
    CHECK(config.epochs == 3);
    CHECK(config.learning_rate == 0.05);
    CHECK(config.fusion == FusionKind::Concat);
    CHECK(config.seed == 9);
    CHECK(config.batch_size == 32);
    CHECK(config.train_fraction == 0.8);
}

TEST_CASE("encoder overrides nest under their own key") {
    const TrainConfig config =
        train_config_from_json("{\"encoder\": {\"d_model\": 16, \"blocks\": 1}}");
    CHECK(config.encoder.d_model == 16);
    CHECK(config.encoder.blocks == 1);
    CHECK(config.encoder.vocab_size == EncoderConfig{}.vocab_size);
}

TEST_CASE("unknown keys are rejected loudly") {
    CHECK_THROWS_WITH_AS(train_config_from_json("{\"epoch\": 3}"),
                         doctest::Contains("epoch"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(train_config_from_json("{\"encoder\": {\"dmodel\": 4}}"),
                         doctest::Contains("dmodel"), std::invalid_argument);
}

TEST_CASE("malformed values are rejected with their key") {
    CHECK_THROWS_WITH_AS(train_config_from_json("{\"epochs\": 2.5}"),
                         doctest::Contains("epochs"), std::invalid_argument);
    CHECK_THROWS_AS(train_config_from_json("{\"epochs\": \"three\"}"), std::invalid_argument);
    CHECK_THROWS_AS(train_config_from_json("{\"fusion\": 7}"), std::invalid_argument);
    CHECK_THROWS_AS(train_config_from_json("{\"fusion\": \"bogus\"}"), std::invalid_argument);
    CHECK_THROWS_AS(train_config_from_json("not json"), std::invalid_argument);
    CHECK_THROWS_AS(train_config_from_json("[1, 2]"), std::invalid_argument);
}

TEST_CASE("out-of-range values fail validation") {
    CHECK_THROWS_WITH_AS(train_config_from_json("{\"epochs\": 0}"),
                         doctest::Contains("epochs"), std::invalid_argument);
    CHECK_THROWS_AS(train_config_from_json("{\"train_fraction\": 1.5}"), std::invalid_argument);
    CHECK_THROWS_AS(train_config_from_json("{\"learning_rate\": -1}"), std::invalid_argument);
    CHECK_THROWS_AS(train_config_from_json("{\"adam_beta1\": 1.0}"), std::invalid_argument);
    CHECK_THROWS_AS(train_config_from_json("{\"batch_size\": 0}"), std::invalid_argument);
}

TEST_CASE("config json round trips") {
    TrainConfig config;
    config.epochs = 7;
    config.fusion = FusionKind::DotProduct;
    config.encoder.heads = 2;
    config.seed = 123;
    const TrainConfig back = train_config_from_json(train_config_to_json(config));
    CHECK(back.epochs == 7);
    CHECK(back.fusion == FusionKind::DotProduct);
    CHECK(back.encoder.heads == 2);
    CHECK(back.seed == 123);
    CHECK(back.learning_rate == config.learning_rate);
}

TEST_CASE("the first adam step moves by almost exactly the learning rate") {
    Param x({1});
    x.value[0] = 1.0;
    x.grad[0] = 2.0;
    ParamRefs params = {{"x", &x}};
    AdamState state;
    TrainConfig config;
    config.learning_rate = 0.1;

    adam_step(params, state, config);
    // Bias correction makes mhat/sqrt(vhat) = g/|g| on step one, so the
    // update is lr * (1 - eps/|g| + ...) ~ 0.1.
    CHECK(x.value[0] == doctest::Approx(0.9).epsilon(1e-8));
    CHECK(x.grad[0] == 0.0);  // consumed and zeroed
    CHECK(state.step == 1);
}

TEST_CASE("zero gradients leave the parameter untouched") {
    Param x({2});
    x.value[0] = 1.5;
    x.value[1] = -2.5;
    ParamRefs params = {{"x", &x}};
    AdamState state;
    TrainConfig config;

    adam_step(params, state, config);
    CHECK(x.value[0] == 1.5);
    CHECK(x.value[1] == -2.5);
}

TEST_CASE("adam drives a quadratic to its minimum") {
    Param x({1});
    x.value[0] = 1.0;
    ParamRefs params = {{"x", &x}};
    AdamState state;
    TrainConfig config;
    config.learning_rate = 0.1;
    for (int step = 0; step < 200; ++step) {
        x.grad[0] = 2.0 * x.value[0];
        adam_step(params, state, config);
    }
    CHECK(std::fabs(x.value[0]) < 0.05);
}

TEST_CASE("misaligned adam state is rejected") {
    Param a({2}), b({2});
    ParamRefs both = {{"a", &a}, {"b", &b}};
    ParamRefs one = {{"a", &a}};
    AdamState state;
    TrainConfig config;
    adam_step(both, state, config);
    CHECK_THROWS_WITH_AS(adam_step(one, state, config), doctest::Contains("2 moments"),
                         std::invalid_argument);
}

TEST_CASE("training memorizes a tiny distinct set") {
    Dataset data;
    Rng rng(40);
    for (int c = 0; c < kNumClasses; ++c) {
        EmbeddingSample proto;
        proto.id = "m" + std::to_string(c);
        proto.t = rng_normal(rng, {4});
        proto.v = rng_normal(rng, {4});
        proto.label = c;
        for (int copy = 0; copy < 10; ++copy) data.embedding.push_back(proto);
    }
    TrainConfig config;
    config.epochs = 50;
    config.learning_rate = 0.01;

    TrainResult result = train(data, config);
    CHECK(result.history.back().train_loss < 0.01);
    const EvalReport report = evaluate(result.model, data, result.train_indices);
    CHECK(report.accuracy == 1.0);
}

TEST_CASE("training is deterministic in data and config") {
    Dataset data;
    data.embedding = gen_embedding_dataset(LabelRule::Additive, 60, 3, 91);
    const TrainConfig config = quick_config(3);

    TrainResult a = train(data, config);
    TrainResult b = train(data, config);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        REQUIRE(a.history[e].train_loss == b.history[e].train_loss);
        REQUIRE(a.history[e].val_accuracy == b.history[e].val_accuracy);
    }
    CHECK(a.train_indices == b.train_indices);

    const ParamRefs pa = a.model.params();
    const ParamRefs pb = b.model.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t p = 0; p < pa.size(); ++p) {
        REQUIRE(pa[p].first == pb[p].first);
        for (std::size_t i = 0; i < pa[p].second->value.size(); ++i) {
            REQUIRE(pa[p].second->value[i] == pb[p].second->value[i]);
        }
    }

    const EvalReport ra = evaluate(a.model, data, a.val_indices);
    const EvalReport rb = evaluate(b.model, data, b.val_indices);
    CHECK(ra.accuracy == rb.accuracy);
    CHECK(ra.auc_macro == rb.auc_macro);

    TrainConfig other = config;
    other.seed = config.seed + 1;
    TrainResult c = train(data, other);
    CHECK(c.history.back().train_loss != a.history.back().train_loss);
}

TEST_CASE("the split is stratified and partitions the dataset") {
    const Dataset data = labeled_embedding_set({10, 13, 17}, 3, 41);
    const TrainConfig config = quick_config(1);
    const TrainResult result = train(data, config);

    std::size_t train_by_class[3] = {0, 0, 0};
    for (std::size_t i : result.train_indices) {
        ++train_by_class[static_cast<std::size_t>(data.label(i))];
    }
    // round(0.8 * {10, 13, 17}) = {8, 10, 14}
    CHECK(train_by_class[0] == 8);
    CHECK(train_by_class[1] == 10);
    CHECK(train_by_class[2] == 14);
    CHECK(result.val_indices.size() == 8);

    std::set<std::size_t> seen(result.train_indices.begin(), result.train_indices.end());
    seen.insert(result.val_indices.begin(), result.val_indices.end());
    CHECK(seen.size() == data.size());
    CHECK(*seen.rbegin() == data.size() - 1);
    CHECK(std::is_sorted(result.train_indices.begin(), result.train_indices.end()));
    CHECK(std::is_sorted(result.val_indices.begin(), result.val_indices.end()));
}

TEST_CASE("training requires every class and some data") {
    Dataset empty;
    CHECK_THROWS_WITH_AS(train(empty, quick_config(1)), doctest::Contains("empty"),
                         std::invalid_argument);
    const Dataset missing = labeled_embedding_set({5, 5, 0}, 3, 42);
    CHECK_THROWS_WITH_AS(train(missing, quick_config(1)), doctest::Contains("neutral"),
                         std::invalid_argument);
}

TEST_CASE("loss decreases over a short real run") {
    Dataset data;
    data.embedding = gen_embedding_dataset(LabelRule::Multiplicative, 300, 4, 90);
    const TrainResult result = train(data, quick_config(8));
    REQUIRE(result.history.size() == 8);
    CHECK(result.history.front().epoch == 1);
    CHECK(result.history.back().epoch == 8);
    CHECK(result.history.back().train_loss < result.history.front().train_loss);
    for (const auto& stats : result.history) {
        CHECK(std::isfinite(stats.train_loss));
        CHECK(stats.val_accuracy >= 0.0);
        CHECK(stats.val_accuracy <= 1.0);
    }
}

TEST_CASE("a zero-initialized head evaluates to exact chance") {
    const Dataset data = labeled_embedding_set({2, 1, 2}, 4, 43);
    ModelConfig mc;
    mc.embed_dim = 4;
    ModelBundle model(mc);  // zero weights: every sample gets uniform probs

    const EvalReport report = evaluate(model, data);
    // argmax ties resolve to the first class, so accuracy is its frequency
    CHECK(report.accuracy == 0.4);
    CHECK(report.auc_defined);
    CHECK(report.auc_macro == 0.5);
    CHECK(report.n == 5);
    CHECK(report.wall_seconds >= 0.0);

    // confusion rows hold the true class counts
    CHECK(report.confusion[0][0] + report.confusion[0][1] + report.confusion[0][2] == 2);
    CHECK(report.confusion[1][0] + report.confusion[1][1] + report.confusion[1][2] == 1);
    CHECK(report.confusion[2][0] + report.confusion[2][1] + report.confusion[2][2] == 2);
    CHECK(report.per_class[0].precision == 0.4);
    CHECK(report.per_class[1].precision == 0.0);
}

TEST_CASE("a single-class evaluation leaves auc undefined") {
    const Dataset data = labeled_embedding_set({0, 0, 3}, 4, 44);
    ModelConfig mc;
    mc.embed_dim = 4;
    ModelBundle model(mc);

    const EvalReport report = evaluate(model, data);
    CHECK_FALSE(report.auc_defined);
    CHECK(std::isnan(report.auc_macro));
    const auto doc = nlohmann::json::parse(eval_report_to_json(report));
    CHECK(doc.at("auc_macro").is_null());
    CHECK(doc.at("per_class")[0].at("auc").is_null());

    CHECK_THROWS_AS(evaluate(model, data, {}), std::invalid_argument);
}

TEST_CASE("models round trip through disk bitwise") {
    testutil::TempDir dir;
    Dataset data;
    data.embedding = gen_embedding_dataset(LabelRule::Multiplicative, 60, 3, 92);
    TrainResult result = train(data, quick_config(2));

    const std::string path = dir.file("model.json");
    save_model(result.model, path);
    ModelBundle loaded = load_model(path);
    CHECK(loaded.config().fusion == result.model.config().fusion);
    CHECK(loaded.config().embed_dim == 3);

    for (std::size_t i = 0; i < 10; ++i) {
        const Tensor expected = result.model.forward(data.embedding[i]);
        const Tensor actual = loaded.forward(data.embedding[i]);
        for (std::size_t c = 0; c < 3; ++c) REQUIRE(actual[c] == expected[c]);
    }

    // identical content on a second save
    const std::string path2 = dir.file("model2.json");
    save_model(loaded, path2);
    CHECK(testutil::read_file(path2) == testutil::read_file(path));
}

TEST_CASE("tampered model files are refused with the tensor named") {
    testutil::TempDir dir;
    Dataset data;
    data.embedding = gen_embedding_dataset(LabelRule::Multiplicative, 30, 2, 93);
    TrainResult result = train(data, quick_config(1));
    const std::string path = dir.file("model.json");
    save_model(result.model, path);

    auto doc = nlohmann::json::parse(testutil::read_file(path));

    SUBCASE("shortened data array") {
        auto& values = doc["tensors"]["head.fc1.bias"]["data"];
        values.erase(values.size() - 1);
        testutil::write_file(path, doc.dump());
        CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("head.fc1.bias"),
                             std::runtime_error);
    }
    SUBCASE("wrong shape") {
        doc["tensors"]["head.fc1.bias"]["shape"] = {3, 3};
        testutil::write_file(path, doc.dump());
        CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("shape"), std::runtime_error);
    }
    SUBCASE("missing tensor") {
        doc["tensors"].erase("head.fc2.weight");
        testutil::write_file(path, doc.dump());
        CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("head.fc2.weight"),
                             std::runtime_error);
    }
    SUBCASE("unknown extra tensor") {
        doc["tensors"]["head.fc9.weight"] = doc["tensors"]["head.fc2.weight"];
        testutil::write_file(path, doc.dump());
        CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("head.fc9.weight"),
                             std::runtime_error);
    }
    SUBCASE("unsupported format version") {
        doc["format_version"] = 2;
        testutil::write_file(path, doc.dump());
        CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("unsupported"),
                             std::runtime_error);
    }
    SUBCASE("invalid json") {
        testutil::write_file(path, "{broken");
        CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("invalid JSON"),
                             std::runtime_error);
    }
}

TEST_CASE("a missing model file names its path") {
    CHECK_THROWS_WITH_AS(load_model("/nonexistent/model.json"),
                         doctest::Contains("/nonexistent/model.json"), std::runtime_error);
}

TEST_CASE("history csv writes one row per epoch") {
    testutil::TempDir dir;
    const std::vector<EpochStats> history = {{1, 1.5, 0.25}, {2, 0.75, 0.5}};
    const std::string path = dir.file("history.csv");
    write_history_csv(history, path);
    const std::string text = testutil::read_file(path);
    CHECK(text == "epoch,train_loss,val_accuracy\n1,1.5,0.25\n2,0.75,0.5\n");
}

}  // TEST_SUITE
