#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "revdeq/checkpoint.hpp"
#include "revdeq/config.hpp"
#include "revdeq/csv.hpp"

using namespace revdeq;
namespace fs = std::filesystem;

namespace {
fs::path temp_dir() {
    static int counter = 0;
    fs::path d = fs::temp_directory_path() /
                 ("revdeq_test_" + std::to_string(::getpid()) + "_" +
                  std::to_string(counter++));
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spew(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}
}  // namespace

TEST_CASE("format_double emits shortest round-tripping decimals") {
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(2.0) == "2");
    CHECK(format_double(-0.0) == "-0");
    CHECK(std::stod(format_double(0.1)) == 0.1);
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
    // strtod, not stod: stod raises out_of_range on subnormals under glibc.
    double tiny = 4.9406564584124654e-324;  // smallest subnormal
    CHECK(std::strtod(format_double(tiny).c_str(), nullptr) == tiny);
}

TEST_CASE("csv assembles rows with RFC 4180 quoting") {
    Csv csv({"a", "b"});
    csv.add_row({"1", "plain"});
    csv.add_row({"2", "with,comma"});
    csv.add_row({"3", "with\"quote"});
    CHECK(csv.num_rows() == 3);
    CHECK(csv.to_string() ==
          "a,b\n1,plain\n2,\"with,comma\"\n3,\"with\"\"quote\"\n");
}

TEST_CASE("csv rejects rows of the wrong width") {
    Csv csv({"a", "b"});
    CHECK_THROWS_AS(csv.add_row({"only one"}), io_error);
}

TEST_CASE("csv atomic write creates parent directories and leaves no temp file") {
    fs::path dir = temp_dir();
    fs::path target = dir / "nested" / "out.csv";
    Csv csv({"x"});
    csv.add_row({"1"});
    csv.write_atomic(target);
    CHECK(slurp(target) == "x\n1\n");
    for (const auto& entry : fs::directory_iterator(target.parent_path()))
        CHECK(entry.path().extension() != ".tmp");
    fs::remove_all(dir);
}

TEST_CASE("checkpoint round-trips tensors byte for byte") {
    fs::path dir = temp_dir();
    fs::path p1 = dir / "a.ckpt";
    fs::path p2 = dir / "b.ckpt";

    Checkpoint ck;
    ck.add("weights", Tensor({2, 3}, {1.0, 2.5, -3.0, 0.1, 0.0, 7.0}));
    ck.add("bias32", Tensor({2}, {0.25, -1.5}, Precision::single));
    ck.add_scalar("lr", 0.125);
    ck.add_u64("rng_state", 0xDEADBEEFCAFEF00DULL);
    ck.save(p1);

    Checkpoint back = Checkpoint::load(p1);
    back.save(p2);
    CHECK(slurp(p1) == slurp(p2));

    const Tensor& w = back.get("weights");
    CHECK(w.shape() == std::vector<std::size_t>{2, 3});
    CHECK(w.at(1, 2) == 7.0);
    CHECK(back.get("bias32").precision() == Precision::single);
    CHECK(back.get_scalar("lr") == 0.125);
    CHECK(back.get_u64("rng_state") == 0xDEADBEEFCAFEF00DULL);
    CHECK(back.find("absent") == nullptr);
    CHECK_THROWS_AS(back.get("absent"), io_error);
    fs::remove_all(dir);
}

TEST_CASE("checkpoint rejects duplicates and corrupt files") {
    Checkpoint ck;
    ck.add_scalar("x", 1.0);
    CHECK_THROWS_AS(ck.add_scalar("x", 2.0), io_error);

    fs::path dir = temp_dir();
    fs::path good = dir / "good.ckpt";
    ck.save(good);
    std::string bytes = slurp(good);

    fs::path bad_magic = dir / "magic.ckpt";
    std::string corrupted = bytes;
    corrupted[0] = 'X';
    spew(bad_magic, corrupted);
    CHECK_THROWS_AS(Checkpoint::load(bad_magic), io_error);

    fs::path truncated = dir / "trunc.ckpt";
    spew(truncated, bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(Checkpoint::load(truncated), io_error);

    fs::path trailing = dir / "trail.ckpt";
    spew(trailing, bytes + "junk");
    CHECK_THROWS_AS(Checkpoint::load(trailing), io_error);

    CHECK_THROWS_AS(Checkpoint::load(dir / "missing.ckpt"), io_error);
    fs::remove_all(dir);
}

TEST_CASE("run config loads json overrides and rejects junk") {
    fs::path dir = temp_dir();
    fs::path cfg_path = dir / "run.json";
    spew(cfg_path, R"({"beta": 0.5, "max_steps": 12, "cell": "linear:0.3",
                       "seed": 9, "precision": "mixed"})");
    RunConfig cfg;
    cfg.load_file(cfg_path);
    CHECK(cfg.beta == 0.5);
    CHECK(cfg.max_steps == 12);
    CHECK(cfg.cell == "linear:0.3");
    CHECK(cfg.seed == 9);
    CHECK(cfg.tol == 1e-6);  // untouched default

    SolverConfig sc = cfg.to_solver_config();
    CHECK(sc.beta == 0.5);
    CHECK(sc.max_steps == 12);
    CHECK(sc.policy.compute == Precision::single);
    CHECK(sc.policy.accumulate == Precision::dbl);

    spew(cfg_path, R"({"betta": 0.5})");
    RunConfig fresh;
    try {
        fresh.load_file(cfg_path);
        FAIL("expected config_error");
    } catch (const config_error& e) {
        CHECK(std::string(e.what()).find("betta") != std::string::npos);
    }

    spew(cfg_path, R"({"beta": "fast"})");
    CHECK_THROWS_AS(fresh.load_file(cfg_path), config_error);
    spew(cfg_path, R"(not json)");
    CHECK_THROWS_AS(fresh.load_file(cfg_path), config_error);
    CHECK_THROWS_AS(fresh.load_file(dir / "missing.json"), config_error);
    fs::remove_all(dir);
}

TEST_CASE("grid strings parse as ranges or lists") {
    auto g = parse_double_grid("0.5:1.3:0.1");
    REQUIRE(g.size() == 9);
    CHECK(g.front() == doctest::Approx(0.5));
    CHECK(g.back() == doctest::Approx(1.3));

    auto lst = parse_double_grid("0.1, 0.5,0.9");
    REQUIRE(lst.size() == 3);
    CHECK(lst[1] == 0.5);

    auto one = parse_double_grid("0.8");
    REQUIRE(one.size() == 1);
    CHECK(one[0] == 0.8);

    auto ints = parse_int_grid("2,4,8");
    CHECK(ints == std::vector<int>{2, 4, 8});
    auto irange = parse_int_grid("1:5:2");
    CHECK(irange == std::vector<int>{1, 3, 5});

    CHECK_THROWS_AS(parse_double_grid(""), config_error);
    CHECK_THROWS_AS(parse_double_grid("a,b"), config_error);
    CHECK_THROWS_AS(parse_double_grid("1:2:0"), config_error);
    CHECK_THROWS_AS(parse_int_grid("2.5"), config_error);
}

TEST_CASE("relative output paths resolve against the env override") {
    fs::path dir = temp_dir();
    ::setenv("REVDEQ_OUT_DIR", dir.string().c_str(), 1);
    CHECK(resolve_out_path("metrics.csv") == dir / "metrics.csv");
    fs::path abs = dir / "abs.csv";
    CHECK(resolve_out_path(abs.string()) == abs);  // absolute paths win
    ::unsetenv("REVDEQ_OUT_DIR");
    CHECK(resolve_out_path("metrics.csv") == fs::path("metrics.csv"));
    fs::remove_all(dir);
}

TEST_CASE("stop rule and precision names map to solver config") {
    RunConfig cfg;
    cfg.stop = "residual";
    CHECK(cfg.to_solver_config().stop_rule == StopRule::residual);
    cfg.stop = "fixed";
    CHECK(cfg.to_solver_config().stop_rule == StopRule::fixed_steps);
    cfg.stop = "sometimes";
    CHECK_THROWS_AS(cfg.to_solver_config(), config_error);
    cfg.stop = "fixed";
    cfg.precision = "quad";
    CHECK_THROWS_AS(cfg.to_solver_config(), config_error);
}
