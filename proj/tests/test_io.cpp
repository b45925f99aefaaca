#include "hwsched/error.hpp"
#include "hwsched/io.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace hwsched;
using namespace hwsched::testing;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "hwsched_io_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::vector<std::string> header_of(const std::string& csv) {
    std::istringstream is(csv);
    std::string line, cell;
    std::getline(is, line);
    std::vector<std::string> cols;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    return cols;
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

void same_model(const TreeModel& a, const TreeModel& b) {
    CHECK(a.classes == b.classes);
    CHECK(a.stations == b.stations);
    CHECK(a.edges == b.edges);
    CHECK(a.mu == b.mu);
    CHECK(a.theta == b.theta);
    CHECK(a.ell == b.ell);
    CHECK(a.r == b.r);
    CHECK(a.gamma == b.gamma);
    CHECK(a.lambda == b.lambda);
    CHECK(a.nu == b.nu);
    CHECK(a.x_star == b.x_star);
    CHECK(a.psi_star == b.psi_star);
}

}  // namespace

TEST_SUITE("io") {
    TEST_CASE("model JSON round trip") {
        std::mt19937_64 rng(61);
        for (int t = 0; t < 30; ++t) {
            const auto m = random_tree(rng, 10);
            const auto back = parse_model(model_to_json(m));
            same_model(m, back.model);
            CHECK_FALSE(back.cost.has_value());
            CHECK(model_hash(back.model) == model_hash(m));
        }
        const auto f = load_fixture("n_model.json");
        const auto again = parse_model(model_to_json(f.model, &*f.cost));
        REQUIRE(again.cost.has_value());
        CHECK(again.cost->queue_weights == f.cost->queue_weights);
        CHECK(again.cost->idle_weights == f.cost->idle_weights);
        CHECK(again.cost->queue_exponent == f.cost->queue_exponent);
    }

    TEST_CASE("model hash") {
        const auto a = load_fixture("n_model.json").model;
        const auto h = model_hash(a);
        CHECK(h.size() == 16);
        CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
        auto b = a;
        b.ell[0] += 1e-9;
        CHECK(model_hash(b) != h);
        CHECK(model_hash(load_fixture("chain.json").model) != h);
    }

    TEST_CASE("defaults for missing fields") {
        const auto f = parse_model(R"({"classes":[{"lambda":2,"x_star":1}],"stations":[{"nu":1}],)"
                                  R"("edges":[{"class":0,"station":0,"mu":2,"psi_star":1}]})");
        CHECK(f.model.theta[0] == 0.0);
        CHECK(f.model.ell[0] == 0.0);
        CHECK(f.model.r[0] == 1.0);
        CHECK(f.model.mu(0, 0) == 2.0);
        CHECK_FALSE(f.cost.has_value());
        CHECK(f.model.gamma == 1.0);
    }

    TEST_CASE("malformed input names the problem") {
        CHECK_THROWS_AS(parse_model("{not json"), InputError);
        CHECK_THROWS_AS(parse_model(R"({"stations":[],"edges":[]})"), InputError);
        CHECK_THROWS_AS(parse_model(R"({"classes":[{}],"stations":[{}],"edges":[{"class":3,"station":0,"mu":1}]})"),
                        InputError);
        try {
            parse_model(R"({"classes":[{"theta":"fast"}],"stations":[{}],"edges":[]})");
            FAIL("expected InputError");
        } catch (const InputError& e) {
            CHECK(std::string(e.what()).find("theta") != std::string::npos);
        }
        CHECK_THROWS_AS(load_model("/nonexistent/model.json"), InputError);
    }

    TEST_CASE("format_double round trips") {
        std::mt19937_64 rng(62);
        std::uniform_real_distribution<double> u(-1e6, 1e6);
        for (int t = 0; t < 1000; ++t) {
            const double v = u(rng) * std::pow(10.0, static_cast<int>(t % 40) - 20);
            CHECK(std::stod(format_double(v)) == v);
        }
        CHECK(format_double(0.1) == "0.1");
        CHECK(format_double(2.0) == "2");
    }

    TEST_CASE("value and policy fields round trip") {
        const auto m = load_fixture("n_model.json").model;
        const Grid g({GridAxis{-1, 1, 4}, GridAxis{0, 3, 3}});
        ValueField v{g, {}};
        for (std::size_t k = 0; k < g.size(); ++k) v.values.push_back(std::sin(static_cast<double>(k)) / 3.0);
        save_value_field(scratch("value"), v, m);
        const auto lv = load_value_field(scratch("value.json"));
        CHECK(lv.field.grid == g);
        CHECK(lv.field.values == v.values);
        CHECK(lv.model_hash == model_hash(m));

        PolicyField p{g, 2, 2, {}};
        for (std::size_t k = 0; k < g.size(); ++k) p.controls.push_back(ControlPoint::vertex(2, 2, k % 2, (k / 2) % 2));
        p.controls[3] = ControlPoint{{0.25, 0.75}, {1.0 / 3.0, 2.0 / 3.0}};
        save_policy_field(scratch("policy"), p, m);
        const auto lp = load_policy_field(scratch("policy.json"));
        CHECK(lp.field.grid == g);
        CHECK(lp.field.controls == p.controls);
        CHECK(lp.field.classes == 2);

        CHECK(std::filesystem::file_size(scratch("value.bin")) == g.size() * sizeof(double));
        std::filesystem::resize_file(scratch("value.bin"), 8);
        CHECK_THROWS_AS(load_value_field(scratch("value.json")), InputError);
        CHECK_THROWS_AS(load_policy_field(scratch("missing.json")), InputError);
    }

    TEST_CASE("CSV columns") {
        const auto m = load_fixture("n_model.json").model;
        const TreeDynamics dyn(m);
        const std::vector<double> x0{0.5, -0.5};
        const auto path = simulate_path(dyn, x0, Policy(StaticPriority{0, 0}), 0.1, 0.01, 1);
        std::ostringstream os;
        write_path_csv(os, path);
        CHECK(header_of(os.str()) == std::vector<std::string>{"t", "x_0", "x_1", "y_0", "y_1", "z_0", "z_1"});
        CHECK(line_count(os.str()) == 12);

        std::vector<TimeSeries> w{TimeSeries::constant(0.1, 3, 1.0), TimeSeries::constant(0.1, 3, 1.0)};
        const auto tr = integrate_det(m, w, ControlPath::constant(0.1, 3, ControlPoint::vertex(2, 2, 0, 0)));
        std::ostringstream ds;
        write_det_csv(ds, tr);
        const auto cols = header_of(ds.str());
        CHECK(cols.front() == "t");
        CHECK(cols.size() == 1 + 2 + 2 + 2 + 2 + 3);
        CHECK(cols.back() == "psi_1_1");
        CHECK(line_count(ds.str()) == 4);

        std::ostringstream cs;
        write_counterexample_csv(cs, example1_counterexample(1.0, 0.1, 1.0));
        CHECK(header_of(cs.str()).front() == "t");
        CHECK(line_count(cs.str()) == 12);
    }

    TEST_CASE("sequences JSON") {
        const auto s = build_sequences(load_fixture("chain.json").model);
        const auto text = sequences_to_json(s);
        CHECK(text.find("\"A\"") != std::string::npos);
        CHECK(text.find("\"B\"") != std::string::npos);
    }
}
