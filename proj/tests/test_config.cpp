#include "snaklat/config.hpp"
#include "snaklat/io.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

using namespace snaklat;
using json = nlohmann::json;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "snaklat_unit";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string first_line(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

int config_exit_code(const json& j, const std::string& command) {
    try {
        parse_config(j, command);
    } catch (const Error& e) {
        return e.exit_code();
    }
    return 0;
}

}  // namespace

TEST_CASE("defaults and overrides", "[config]") {
    const StudyConfig c = parse_config(json::parse(R"({
        "model": {"family": "quadratic_cubic"},
        "grid": {"nd": 9, "symmetry": "on_site"},
        "run": {"pattern": {"N": 4, "M": 2, "variant": "vbar"}, "mu": 0.3, "d": 0.01},
        "seed": 42
    })"), "solve");
    CHECK(c.model.family == Family::QuadraticCubic);
    CHECK(c.grid.nd == 9);
    CHECK(c.grid.symmetry == Symmetry::OnSite);
    CHECK(c.solve.pattern.N == 4);
    CHECK(c.solve.pattern.M == 2);
    CHECK(c.solve.pattern.variant == Variant::VBar);
    CHECK(c.solve.mu == 0.3);
    CHECK(c.seed == 42);
    CHECK(c.output.wants("json"));
    const StudyConfig e = parse_config(json::object(), "reduced");
    CHECK(e.reduced.id == ReducedId::PitchInterior);
}

TEST_CASE("unknown keys are rejected at every level", "[config]") {
    CHECK_THROWS_WITH(parse_config(json::parse(R"({"grid": {"nd": 5, "size": 3}})"), "solve"),
                      Catch::Matchers::ContainsSubstring("unknown key grid.size"));
    CHECK_THROWS_WITH(parse_config(json::parse(R"({"extra": 1})"), "solve"),
                      Catch::Matchers::ContainsSubstring("unknown key extra"));
    CHECK_THROWS_WITH(parse_config(json::parse(R"({"run": {"pattern": {"N": 2, "K": 1}}})"), "solve"),
                      Catch::Matchers::ContainsSubstring("unknown key run.pattern.K"));
    // Keys valid for one command are unknown for another.
    CHECK_THROWS_AS(parse_config(json::parse(R"({"run": {"t_end": 5}})"), "solve"), Error);
    CHECK_NOTHROW(parse_config(json::parse(R"({"run": {"t_end": 5}})"), "simulate"));
}

TEST_CASE("config errors exit with code 2", "[config]") {
    CHECK(config_exit_code(json::parse(R"({"grid": {"nd": 4}, "run": {"pattern": {"N": 5, "M": 1}}})"), "solve") == 2);
    CHECK_THROWS_WITH(parse_config(json::parse(R"({"grid": {"nd": 4}, "run": {"pattern": {"N": 5, "M": 1}}})"), "solve"),
                      "pattern exceeds domain");
    CHECK(config_exit_code(json::parse(R"({"grid": {"nd": "ten"}})"), "solve") == 2);
    CHECK(config_exit_code(json::parse(R"({"model": {"family": "quartic"}})"), "solve") == 2);
    CHECK(config_exit_code(json::parse(R"({"model": {"family": "polynomial"}})"), "solve") == 2);
    CHECK(config_exit_code(json::parse(R"({"grid": {"symmetry": "none"}})"), "solve") == 2);
    CHECK(config_exit_code(json::parse(R"({"run": {"pattern": {"N": 2, "M": 3}}})"), "solve") == 2);
    CHECK(config_exit_code(json::parse(R"({"grid": {"nd": 10}, "run": {"n_last": 10}})"), "cusp") == 2);
    CHECK(config_exit_code(json::parse(R"({"run": {"perturbation": "kick"}})"), "simulate") == 2);
    CHECK(config_exit_code(json::parse(R"({"run": {"d_hat": [1e-5, 1e-4]}})"), "verify-asym") == 2);
    CHECK(config_exit_code(json::parse(R"({"output": {"formats": ["xml"]}})"), "solve") == 2);
    CHECK(config_exit_code(json::object(), "bake") == 2);
    CHECK(config_exit_code(json::parse(R"([1, 2])"), "solve") == 2);
    CHECK(Error(ErrorKind::NoConvergence, "x").exit_code() == 1);
}

TEST_CASE("polynomial coefficients", "[config]") {
    const StudyConfig c = parse_config(json::parse(R"({
        "model": {"family": "polynomial", "coefficients": [[1, 1, -1.0], [0, 3, 2.0], [0, 5, -1.0]]}
    })"), "solve");
    const Nonlinearity nl = c.model.build();
    const auto ref = builtin_nonlinearity(Family::CubicQuintic);
    CHECK(nl.u_plus(0.5) == Catch::Approx(ref.u_plus(0.5)).margin(1e-10));
    CHECK(config_exit_code(json::parse(R"({"model": {"family": "polynomial", "coefficients": [[1, 1]]}})"), "solve") == 2);
    CHECK(config_exit_code(json::parse(R"({"model": {"coefficients": [[1, 1, 1.0]]}})"), "solve") == 2);
}

TEST_CASE("profile files round trip", "[config]") {
    const auto nl = builtin_nonlinearity(Family::CubicQuintic);
    const GridSpec g = GridSpec::wedge(5, Symmetry::OnSite);
    Field u = anti_continuum_pattern(g, {3, 2, Variant::VBar, Symmetry::OnSite}, 0.37, nl);
    u.values[2] = 0.1 + 1e-17;
    const auto path = scratch("profile.json");
    io::write_profile_json(path, u);
    const Field back = io::read_profile_json(path);
    CHECK(back.grid == g);
    CHECK(back.values == u.values);
    const auto csv = scratch("profile.csv");
    io::write_profile_csv(csv, u);
    CHECK(first_line(csv) == "n,m,value");
    CHECK_THROWS_AS(io::read_profile_json(scratch("missing.json")), Error);
}

TEST_CASE("csv headers", "[config]") {
    Branch b;
    b.grid = GridSpec::wedge(2, Symmetry::OffSite);
    BranchPoint p;
    p.u = Vector::Zero(3);
    p.tangent = Vector::Zero(4);
    b.points = {p, p};
    b.events = {{0, EventKind::Start}, {1, EventKind::End}};
    const auto path = scratch("branch.csv");
    io::write_branch_csv(path, b);
    CHECK(first_line(path) == "index,mu,d,norm,n_unstable,event");
    Trajectory tr;
    tr.times = {0.0};
    tr.deviation = {1.0};
    const auto tp = scratch("trajectory.csv");
    io::write_trajectory_csv(tp, tr);
    CHECK(first_line(tp) == "t,deviation");
    const auto cp = scratch("cusp.csv");
    io::write_cusp_csv(cp, CuspSequence{});
    CHECK(first_line(cp) == "N,mu_N,d_N,nullity_check,converged");
}

TEST_CASE("manifest records versions and configuration", "[config]") {
    const json cfg = {{"grid", {{"nd", 4}}}};
    const json m = io::manifest_json("solve", cfg, 3, 1.5, 0, {});
    CHECK(m.at("command") == "solve");
    CHECK(m.at("config") == cfg);
    CHECK(m.at("seed") == 3);
    CHECK(m.at("wall_time_s") == 1.5);
    CHECK(m.at("versions").at("snaklat") == version);
    CHECK(m.at("versions").contains("eigen"));
}
