#include "hwsched/io.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& workdir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "hwsched_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string fixture(const std::string& name) { return std::string(HWSCHED_FIXTURES) + "/" + name; }

/// Runs the CLI with stdout and stderr captured to <out>/log.txt; returns the exit status.
int run(const std::string& args, const std::string& out) {
    const auto dir = workdir() / out;
    fs::create_directories(dir);
    const std::string cmd = std::string("\"") + HWSCHED_CLI + "\" " + args + " --out \"" + dir.string() + "\" > \"" +
                            (dir / "log.txt").string() + "\" 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

json read_json(const fs::path& p) {
    std::ifstream is(p);
    return json::parse(is);
}

std::string read_text(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("cli") {
    TEST_CASE("validate: exit codes follow the outcome") {
        CHECK(run("validate --model " + fixture("n_model.json"), "valid") == 0);
        const auto rep = read_json(workdir() / "valid" / "validate.json");
        CHECK(rep["valid"] == true);
        CHECK(rep["diameter"] == 3);
        CHECK(rep["model_hash"].get<std::string>().size() == 16);
        CHECK(run("validate --model " + fixture("not_a_tree.json"), "cycle") == 1);
        CHECK(read_json(workdir() / "cycle" / "validate.json")["valid"] == false);
        CHECK(run("validate --model /nonexistent.json", "missing") == 2);
        CHECK(read_text(workdir() / "missing" / "log.txt").find("error:") != std::string::npos);
    }

    TEST_CASE("bad usage exits with 2") {
        CHECK(run("no-such-command", "usage1") == 2);
        CHECK(run("validate", "usage2") == 2);
        CHECK(run("--threads -3 counterexample", "usage3") == 2);
        CHECK(run("solve-hjb --model " + fixture("n_model.json") + " --sweep sideways", "usage4") == 2);
    }

    TEST_CASE("counterexample report and manifest") {
        REQUIRE(run("counterexample --k 10 --seed 4", "ce") == 0);
        const auto dir = workdir() / "ce";
        const auto rep = read_json(dir / "counterexample.json");
        CHECK(rep["max_residual"].get<double>() <= 1e-8);
        CHECK(rep["sup_state_norm"].get<double>() == doctest::Approx(10.0).epsilon(0.01));
        CHECK(rep["sup_driver_norm"].get<double>() == 0.0);
        CHECK(fs::exists(dir / "counterexample.csv"));
        const auto man = read_json(dir / "manifest.json");
        CHECK(man["command"] == "counterexample");
        CHECK(man["seed"] == 4);
        CHECK(man["config"]["k"] == "10");
        CHECK(man["versions"].contains("hwsched"));
        CHECK(run("counterexample --k 10 --tol 1e-30", "ce_strict") == 1);
    }

    TEST_CASE("config file, with flags taking precedence") {
        const auto cfg = workdir() / "cfg.json";
        std::ofstream(cfg) << R"({"seed": 9, "counterexample": {"k": 3, "horizon": 2}})";
        REQUIRE(run("--config " + cfg.string() + " counterexample", "cfg_a") == 0);
        auto man = read_json(workdir() / "cfg_a" / "manifest.json");
        CHECK(man["seed"] == 9);
        CHECK(man["config"]["k"] == "3");
        CHECK(man["config"]["horizon"] == "2");
        REQUIRE(run("--config " + cfg.string() + " counterexample --k 5 --seed 2", "cfg_b") == 0);
        man = read_json(workdir() / "cfg_b" / "manifest.json");
        CHECK(man["seed"] == 2);
        CHECK(man["config"]["k"] == "5");
        std::ofstream(workdir() / "broken.json") << "{";
        CHECK(run("--config " + (workdir() / "broken.json").string() + " counterexample", "cfg_c") == 2);
    }

    TEST_CASE("solve, extract and evaluate agree on the one-class model") {
        const auto m = fixture("single_class.json");
        REQUIRE(run("solve-hjb --model " + m + " --count 241 --boundary-paths 512", "hjb") == 0);
        const auto hjb = workdir() / "hjb";
        CHECK(read_json(hjb / "hjb_report.json")["converged"] == true);
        const auto value = hwsched::load_value_field(hjb / "value.json");
        CHECK(value.field.grid.size() == 241);
        CHECK(value.model_hash == hwsched::model_hash(hwsched::load_model(m).model));

        REQUIRE(run("extract-policy --model " + m + " --value " + (hjb / "value.json").string(), "pol") == 0);
        const auto pol = workdir() / "pol" / "policy.json";
        CHECK(fs::exists(pol));

        const int rc = run("evaluate-policy --model " + m + " --policy grid:" + pol.string() +
                               " --x0 0.5 --paths 4000 --dt 0.01 --value " + (hjb / "value.json").string(),
                           "eval");
        CHECK(rc == 0);
        const auto rep = read_json(workdir() / "eval" / "evaluate.json");
        CHECK(rep["abs_diff"].get<double>() <= rep["tolerance"].get<double>());

        CHECK(run("evaluate-policy --model " + fixture("n_model.json") + " --x0 0,0 --paths 10 --value " +
                      (hjb / "value.json").string(),
                  "eval_wrong") == 2);
    }

    TEST_CASE("simulation and deterministic commands write their artifacts") {
        const auto n = fixture("n_model.json");
        CHECK(run("simulate --model " + fixture("single_class.json") + " --x0 0.5 --horizon 1 --dt 0.01 --paths 3", "sim") == 0);
        CHECK(fs::exists(workdir() / "sim" / "path_2.csv"));
        CHECK(run("det-run --model " + n, "det") == 0);
        CHECK(fs::exists(workdir() / "det" / "det.csv"));
        CHECK(run("nonidling-check --model " + n, "nonidle") == 0);
        CHECK(run("integral-residual --model " + fixture("chain.json"), "integral") == 0);
        CHECK(fs::exists(workdir() / "integral" / "sequences.json"));
        CHECK(run("prelimit --model " + fixture("single_class.json") + " --n 16 --replications 2", "pre") == 0);
        CHECK(fs::exists(workdir() / "pre" / "ctmc_path_1.csv"));
        CHECK(run("compare --model " + fixture("single_class.json") + " --n 16 --replications 200 --times 0.5,1", "cmp") == 0);
        CHECK(fs::exists(workdir() / "cmp" / "compare.csv"));
        CHECK(run("det-run --model " + fixture("not_a_tree.json"), "det_bad") == 2);
    }

    TEST_CASE("version") {
        const auto dir = workdir() / "version";
        fs::create_directories(dir);
        const std::string cmd = std::string("\"") + HWSCHED_CLI + "\" --version > \"" + (dir / "v.txt").string() + "\"";
        CHECK(std::system(cmd.c_str()) == 0);
        CHECK(read_text(dir / "v.txt").find('.') != std::string::npos);
    }
}
