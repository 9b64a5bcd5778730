#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "pdmp/config.hpp"

using namespace pdmp;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
    auto p = std::filesystem::temp_directory_path() / name;
    std::ofstream(p) << text;
    return p;
}

}  // namespace

TEST_CASE("TOML documents become JSON values") {
    auto j = parse_toml(R"(
seed = 7
replicas = 100
flag = true
name = "x"
[a]
family = "constant"
level = 1.5
[b]
family = "affine"
base = 1
slope = 2.0
[invariant]
times = [1, 2.5]
start = { position = 5.0, velocity = -1 }
)");
    CHECK(j["seed"] == 7);
    CHECK(j["flag"] == true);
    CHECK(j["name"] == "x");
    CHECK(j["invariant"]["times"][1] == 2.5);
    CHECK(j["invariant"]["start"]["velocity"] == -1);
    auto p = parse_rates(j);
    CHECK(p.a(3.0) == 1.5);
    CHECK(p.b(-2.0) == 5.0);
    auto c = make_config(j, "invariant");
    CHECK(c.seed == 7);
    CHECK(c.replicas == 100);
    CHECK(c.params["times"].size() == 2);
}

TEST_CASE("TOML and JSON files load alike") {
    auto t = write_temp("pdmp_cfg_test.toml", "seed = 3\n[a]\nfamily = \"constant\"\nlevel = 1\n[b]\nfamily = \"constant\"\nlevel = 3\n");
    auto js = write_temp("pdmp_cfg_test.json",
                         R"({"seed": 3, "a": {"family": "constant", "level": 1}, "b": {"family": "constant", "level": 3}})");
    CHECK(load_config_file(t) == load_config_file(js));
    CHECK_THROWS_AS(load_config_file("/nonexistent/pdmp.toml"), ConfigError);
    std::filesystem::remove(t);
    std::filesystem::remove(js);
}

TEST_CASE("parse errors are config errors") {
    CHECK_THROWS_AS(parse_toml("seed = = 3"), ConfigError);
    CHECK_THROWS_AS(parse_json("{\"seed\": }"), ConfigError);
    CHECK_THROWS_AS(parse_toml("when = 1979-05-27T07:32:00Z"), ConfigError);
}

TEST_CASE("rate families") {
    auto tab = parse_rate(json{{"family", "tabulated"}, {"knots", {0.0, 1.0, 2.0}}, {"values", {1.0, 2.0, 2.5}}});
    CHECK(tab.family() == RateFamily::tabulated);
    CHECK(tab(0.5) == 1.5);
    for (const auto& r : {RateSpec::constant(2.0), RateSpec::affine(1.0, 0.5), tab}) {
        auto back = parse_rate(rate_to_json(r));
        CHECK(back.family() == r.family());
        for (double y : {0.0, 0.7, 3.0}) CHECK(back(y) == r(y));
    }
    CHECK_THROWS_AS(parse_rate(json{{"family", "cubic"}}), ConfigError);
    CHECK_THROWS_AS(parse_rate(json{{"level", 1.0}}), ConfigError);
    CHECK_THROWS_AS(parse_rate(json{{"family", "constant"}}), ConfigError);
    CHECK_THROWS_AS(parse_rate(json{{"family", "constant"}, {"level", "one"}}), ConfigError);
    // Hypothesis violations are data here; experiments reject them later.
    CHECK(parse_rate(json{{"family", "constant"}, {"level", -1.0}})(0.0) == -1.0);
    CHECK_THROWS_AS(parse_rate(json{{"family", "tabulated"}, {"knots", {0.0, 1.0}}, {"values", {1.0}}}), ConfigError);
}

TEST_CASE("defaults apply when rates are omitted") {
    auto c = make_config(json::object(), "simulate");
    CHECK(c.rates.a(2.0) == 1.0);
    CHECK(c.rates.b(2.0) == 3.0);
    CHECK(c.seed == 1);
    CHECK(c.replicas == 10000);
    CHECK(c.params.is_object());
    CHECK(c.params.empty());
    CHECK_THROWS_AS(parse_rates(json{{"a", {{"family", "constant"}, {"level", 1.0}}}}), ConfigError);
}

TEST_CASE("shape errors in the top-level document") {
    CHECK_THROWS_AS(make_config(json::array(), "simulate"), ConfigError);
    CHECK_THROWS_AS(make_config(json{{"simulate", 3}}, "simulate"), ConfigError);
    CHECK_THROWS_AS(make_config(json{{"seed", "x"}}, "simulate"), ConfigError);
    CHECK_THROWS_AS(make_config(json{{"replicas", -5}}, "simulate"), ConfigError);
    CHECK_THROWS_AS(make_config(json{{"replicas", 0}}, "simulate"), ConfigError);
    CHECK_THROWS_AS(make_config(json{{"replicas", 2.5}}, "simulate"), ConfigError);
    CHECK_THROWS_AS(make_config(json{{"seed", -1}}, "simulate"), ConfigError);
}

TEST_CASE("states and flavors") {
    auto s = parse_state(json{{"position", -2.5}, {"velocity", 1}});
    CHECK(s.position == -2.5);
    CHECK(s.velocity == Velocity::plus);
    CHECK(parse_state(json{{"position", 0}, {"velocity", -1}}).velocity == Velocity::minus);
    CHECK_THROWS_AS(parse_state(json{{"position", 0}, {"velocity", 0}}), ConfigError);
    CHECK_THROWS_AS(parse_state(json{{"velocity", 1}}), ConfigError);
    CHECK_THROWS_AS(parse_state(json(3)), ConfigError);
    CHECK(parse_flavor(json::object(), Flavor::reflected) == Flavor::reflected);
    CHECK(parse_flavor(json{{"flavor", "unreflected"}}, Flavor::reflected) == Flavor::unreflected);
    CHECK_THROWS_AS(parse_flavor(json{{"flavor", "mirror"}}, Flavor::reflected), ConfigError);
}

TEST_CASE("param_or reads or falls back") {
    json j{{"x", 2.5}, {"s", "text"}};
    CHECK(param_or(j, "x", 1.0) == 2.5);
    CHECK(param_or(j, "y", 1.0) == 1.0);
    CHECK_THROWS_AS(param_or(j, "s", 1.0), ConfigError);
}
