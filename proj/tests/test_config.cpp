#include "sdbc/config.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace sdbc {
namespace {

std::string schema_key(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const SchemaError& e) {
        return e.key();
    }
    return "<no error>";
}

TEST(Config, DefaultsResolveAndPassRangeChecks) {
    const json c = resolve_config(std::nullopt, {}, std::nullopt);
    EXPECT_EQ(c, default_config());
    EXPECT_EQ(c["time"]["n_t"], 20);
    EXPECT_EQ(c["geometry"]["kind"], "interval");
}

TEST(Config, UnknownKeyIsNamed) {
    EXPECT_EQ(schema_key([] { merge_config(default_config(), json::parse(R"({"mesh": {"nn": 3}})")); }), "mesh.nn");
    EXPECT_EQ(schema_key([] { merge_config(default_config(), json::parse(R"({"bogus": 1})")); }), "bogus");
    EXPECT_EQ(schema_key([] {
                  json c = default_config();
                  apply_override(c, "weights.muu=2");
              }),
              "weights.muu");
}

TEST(Config, TypeChangesRejected) {
    EXPECT_EQ(schema_key([] { merge_config(default_config(), json::parse(R"({"time": {"n_t": 2.5}})")); }), "time.n_t");
    EXPECT_EQ(schema_key([] { merge_config(default_config(), json::parse(R"({"time": {"T": "one"}})")); }), "time.T");
    EXPECT_EQ(schema_key([] { merge_config(default_config(), json::parse(R"({"geometry": 3})")); }), "geometry");
    EXPECT_EQ(schema_key([] { merge_config(default_config(), json::parse(R"({"control": {"eps": ["a"]}})")); }),
              "control.eps[0]");
    // integers are accepted where a float is expected
    EXPECT_EQ(merge_config(default_config(), json::parse(R"({"time": {"T": 2}})"))["time"]["T"], 2);
}

TEST(Config, OverridesParseJsonThenString) {
    json c = default_config();
    apply_override(c, "time.n_t=8");
    apply_override(c, "control.eps=[0.5,0.25]");
    apply_override(c, "geometry.kind=disk");
    apply_override(c, "noise.recombining=false");
    EXPECT_EQ(c["time"]["n_t"], 8);
    EXPECT_EQ(c["control"]["eps"].size(), 2u);
    EXPECT_EQ(c["geometry"]["kind"], "disk");
    EXPECT_EQ(c["noise"]["recombining"], false);
    EXPECT_THROW(apply_override(c, "no_equals_sign"), SchemaError);
    EXPECT_THROW(apply_override(c, "=3"), SchemaError);
    EXPECT_THROW(apply_override(c, "time..T=3"), SchemaError);
}

TEST(Config, LayeringFileThenOverridesThenSeed) {
    const std::string path = ::testing::TempDir() + "sdbc_cfg.json";
    {
        std::ofstream out(path);
        out << R"({"time": {"n_t": 12, "T": 0.5}, "noise": {"seed": 3}})";
    }
    const json c = resolve_config(path, {"time.n_t=6"}, 99u);
    EXPECT_EQ(c["time"]["n_t"], 6);
    EXPECT_EQ(c["time"]["T"], 0.5);
    EXPECT_EQ(c["noise"]["seed"], 99u);
    std::remove(path.c_str());
    EXPECT_EQ(schema_key([] { resolve_config(std::string("/nonexistent/cfg.json"), {}, std::nullopt); }), "");
}

TEST(Config, RangeChecksNameTheKey) {
    EXPECT_EQ(schema_key([] { resolve_config(std::nullopt, {"time.T=0"}, std::nullopt); }), "time.T");
    EXPECT_EQ(schema_key([] { resolve_config(std::nullopt, {"mesh.n=2"}, std::nullopt); }), "mesh.n");
    EXPECT_EQ(schema_key([] { resolve_config(std::nullopt, {"weights.mu=1"}, std::nullopt); }), "weights.mu");
    EXPECT_EQ(schema_key([] { resolve_config(std::nullopt, {"noise.backend=gpu"}, std::nullopt); }), "noise.backend");
    EXPECT_EQ(schema_key([] { resolve_config(std::nullopt, {"control.eps=[]"}, std::nullopt); }), "control.eps");
    EXPECT_EQ(schema_key([] { resolve_config(std::nullopt, {"control.aux_max_weight_decades=0"}, std::nullopt); }),
              "control.aux_max_weight_decades");
}

TEST(Config, HashIsStableAndSensitive) {
    const json a = default_config();
    json b = default_config();
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
    apply_override(b, "noise.seed=2");
    EXPECT_NE(config_hash(a), config_hash(b));
    // FNV-1a 64 of "{}"
    EXPECT_EQ(config_hash(json::object()), "08f44b07b5901a25");
}

TEST(ScalarField, NumbersAndTermTables) {
    EXPECT_EQ(scalar_field(json(2.5), "k")(0.3, Point(0.1, 0.2)), 2.5);
    const json table = json::parse(R"([{"c": 2, "px": 2}, {"c": 3, "trig": "sin", "kx": 1.5, "w": 2}, {"pt": 1}])");
    const ScalarField f = scalar_field(table, "coefficients.a1");
    const double t = 0.4, x = 0.7, y = -0.2;
    EXPECT_NEAR(f(t, Point(x, y)), 2 * x * x + 3 * std::sin(1.5 * x + 2 * t) + t, 1e-15);
    EXPECT_TRUE(field_is_time_dependent(table));
    EXPECT_FALSE(field_is_time_dependent(json::parse(R"([{"c": 1, "py": 1, "trig": "cos", "ky": 2}])")));
    EXPECT_FALSE(field_is_time_dependent(json(1.0)));
}

TEST(ScalarField, RejectsMalformedTerms) {
    EXPECT_EQ(schema_key([] { scalar_field(json("x"), "coefficients.a1"); }), "coefficients.a1");
    EXPECT_EQ(schema_key([] { scalar_field(json::parse(R"([{"q": 1}])"), "coefficients.a1"); }),
              "coefficients.a1[0].q");
    EXPECT_EQ(schema_key([] { scalar_field(json::parse(R"([{"px": -1}])"), "coefficients.a1"); }),
              "coefficients.a1[0].px");
    EXPECT_EQ(schema_key([] { scalar_field(json::parse(R"([{"trig": "tan"}])"), "coefficients.a1"); }),
              "coefficients.a1[0].trig");
    EXPECT_EQ(schema_key([] { scalar_field(json::parse(R"([3])"), "coefficients.a1"); }), "coefficients.a1[0]");
}

TEST(Config, CoefficientTablesMergeThroughSchema) {
    const json c = resolve_config(std::nullopt, {R"(coefficients.a1=[{"c": 1, "px": 1}])", "coefficients.B=[0.5, 0]"},
                                  std::nullopt);
    EXPECT_TRUE(c["coefficients"]["a1"].is_array());
    EXPECT_EQ(c["coefficients"]["B"][0], 0.5);
    EXPECT_EQ(schema_key([] { resolve_config(std::nullopt, {"coefficients.B=[1,2,3]"}, std::nullopt); }),
              "coefficients.B");
    EXPECT_EQ(schema_key([] { resolve_config(std::nullopt, {R"(coefficients.a2=[{"bad": 1}])"}, std::nullopt); }),
              "coefficients.a2[0].bad");
}

}  // namespace
}  // namespace sdbc
