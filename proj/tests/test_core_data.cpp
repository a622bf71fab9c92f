#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>

#include "giope/data.hpp"
#include "giope/jsonl.hpp"
#include "helpers.hpp"

using namespace giope;

namespace {
Trajectory make_traj(std::string id, std::vector<double> x0, std::vector<double> rewards,
                     std::vector<double> b, std::vector<double> e) {
    Trajectory t;
    t.id = std::move(id);
    t.x0 = std::move(x0);
    t.rewards = std::move(rewards);
    t.b_probs = std::move(b);
    t.e_probs = std::move(e);
    t.actions.assign(t.rewards.size(), 0);
    return t;
}
} // namespace

TEST_CASE("discounted_return") {
    CHECK(discounted_return(make_traj("a", {0}, {1, 1, 1}, {1, 1, 1}, {1, 1, 1}), 1.0) == 3.0);
    CHECK(discounted_return(make_traj("b", {0}, {0, 0, 1}, {1, 1, 1}, {1, 1, 1}), 0.5) == 0.25);
    CHECK(discounted_return(make_traj("c", {0}, {-1}, {1}, {1}), 0.99) == -1.0);
    CHECK(discounted_return(make_traj("d", {0}, {}, {}, {}), 0.5) == 0.0);
}

TEST_CASE("importance_ratio") {
    CHECK(importance_ratio(make_traj("a", {0}, {0, 0}, {0.3, 0.7}, {0.3, 0.7})) == 1.0);
    CHECK(importance_ratio(make_traj("b", {0}, {0, 0}, {0.25, 1.0}, {0.5, 0.5})) == 1.0);
    CHECK(importance_ratio(make_traj("z", {0}, {0}, {0.5}, {0.0})) == 0.0);
    CHECK_THROWS_AS(importance_ratio(make_traj("c", {0}, {0}, {0.0}, {0.5})),
                    SupportViolation);
    CHECK_THROWS_AS(importance_ratio(make_traj("d", {0}, {0}, {0.5}, {-0.1})),
                    SupportViolation);
}

TEST_CASE("importance_ratio is 1 whenever e equals b elementwise") {
    Rng rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t steps = 1 + rng.bounded(6);
        std::vector<double> probs;
        for (std::size_t t = 0; t < steps; ++t) probs.push_back(rng.uniform01_open());
        auto traj = make_traj("p", {0}, std::vector<double>(steps, 0.0), probs, probs);
        CHECK(importance_ratio(traj) == 1.0);
    }
}

TEST_CASE("to_records") {
    SECTION("single trajectory with identical policies") {
        auto ds = to_records(std::vector<Trajectory>{
                                 make_traj("a", {0.5, 1.0}, {1}, {0.4}, {0.4})},
                             1.0);
        REQUIRE(ds.size() == 1);
        CHECK(ds.records()[0].x == std::vector<double>{0.5, 1.0});
        CHECK(ds.records()[0].rho == 1.0);
        CHECK(ds.records()[0].g == 1.0);
        CHECK(ds.g_inf() == 1.0);
        CHECK(ds.m() == 2);
    }
    SECTION("composes the two reductions, order preserved") {
        auto t1 = make_traj("a", {1.0}, {0, 0, 1}, {0.5, 0.5, 0.5}, {1.0, 0.5, 0.5});
        auto t2 = make_traj("b", {2.0}, {-4}, {0.25}, {0.125});
        auto ds = to_records(std::vector<Trajectory>{t1, t2}, 0.5);
        REQUIRE(ds.size() == 2);
        CHECK(ds.records()[0].rho == importance_ratio(t1));
        CHECK(ds.records()[0].g == discounted_return(t1, 0.5));
        CHECK(ds.records()[1].rho == 0.5);
        CHECK(ds.records()[1].g == -4.0);
        CHECK(ds.g_inf() == 4.0);
    }
    SECTION("empty list") {
        auto ds = to_records(std::vector<Trajectory>{}, 1.0);
        CHECK(ds.empty());
        CHECK(ds.g_inf() == 0.0);
    }
    SECTION("mixed feature widths") {
        CHECK_THROWS_AS(to_records(std::vector<Trajectory>{
                                       make_traj("a", {1.0}, {1}, {1}, {1}),
                                       make_traj("b", {1.0, 2.0}, {1}, {1}, {1})},
                                   1.0),
                        MixedWidth);
    }
}

TEST_CASE("load_jsonl") {
    testutil::TempDir tmp("jsonl");

    SECTION("well-formed file, order preserved") {
        const std::string path = tmp.file("ok.jsonl");
        std::ofstream out(path);
        out << R"({"id":"a","x0":[0.1],"actions":[1],"rewards":[1.0],"b_probs":[0.5],"e_probs":[0.25]})"
            << "\n"
            << R"({"id":"b","x0":[0.2],"actions":[0,1],"rewards":[0.0,1.0],"b_probs":[0.5,0.5],"e_probs":[0.5,0.5]})"
            << "\n"
            << R"({"id":"c","x0":[0.3],"actions":[],"rewards":[],"b_probs":[],"e_probs":[]})"
            << "\n";
        out.close();
        auto trajs = load_jsonl(path);
        REQUIRE(trajs.size() == 3);
        CHECK(trajs[0].id == "a");
        CHECK(trajs[1].id == "b");
        CHECK(trajs[2].id == "c");
        CHECK(trajs[1].actions == std::vector<int>{0, 1});
    }
    SECTION("mismatched array lengths name the line") {
        const std::string path = tmp.file("bad.jsonl");
        std::ofstream out(path);
        out << R"({"id":"a","x0":[0.1],"actions":[1],"rewards":[1.0],"b_probs":[0.5],"e_probs":[0.25]})"
            << "\n"
            << R"({"id":"b","x0":[0.1],"actions":[1,0],"rewards":[1.0],"b_probs":[0.5],"e_probs":[0.25]})"
            << "\n";
        out.close();
        try {
            load_jsonl(path);
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
    SECTION("missing field is named") {
        const std::string path = tmp.file("missing.jsonl");
        std::ofstream(path) << R"({"id":"a","x0":[0.1],"actions":[],"rewards":[],"b_probs":[]})"
                            << "\n";
        try {
            load_jsonl(path);
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(std::string(e.what()).find("e_probs") != std::string::npos);
        }
    }
    SECTION("empty file") {
        const std::string path = tmp.file("empty.jsonl");
        std::ofstream(path).close();
        CHECK(load_jsonl(path).empty());
    }
    SECTION("parse error carries the line number") {
        const std::string path = tmp.file("parse.jsonl");
        std::ofstream(path) << "{not json}\n";
        CHECK_THROWS_AS(load_jsonl(path), ParseError);
    }
}

TEST_CASE("jsonl round-trip is the identity on field values") {
    testutil::TempDir tmp("roundtrip");
    Rng rng(7);
    std::vector<Trajectory> trajs;
    for (int i = 0; i < 20; ++i) {
        const std::size_t steps = rng.bounded(5);
        Trajectory t;
        t.id = "traj-" + std::to_string(i);
        t.x0 = {rng.uniform01(), rng.normal(0, 3)};
        for (std::size_t s = 0; s < steps; ++s) {
            t.actions.push_back(static_cast<int>(rng.bounded(4)));
            t.rewards.push_back(rng.normal(0, 1));
            t.b_probs.push_back(rng.uniform01_open());
            t.e_probs.push_back(rng.uniform01());
        }
        trajs.push_back(std::move(t));
    }
    const std::string path = tmp.file("rt.jsonl");
    save_jsonl(path, trajs);
    const auto back = load_jsonl(path);
    REQUIRE(back.size() == trajs.size());
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        CHECK(back[i].id == trajs[i].id);
        CHECK(back[i].x0 == trajs[i].x0);
        CHECK(back[i].actions == trajs[i].actions);
        CHECK(back[i].rewards == trajs[i].rewards);
        CHECK(back[i].b_probs == trajs[i].b_probs);
        CHECK(back[i].e_probs == trajs[i].e_probs);
    }
}

namespace {
Dataset indexed_dataset(std::size_t n, double offset = 0.0) {
    std::vector<EvalRecord> recs;
    for (std::size_t i = 0; i < n; ++i)
        recs.push_back(EvalRecord{{static_cast<double>(i)}, 1.0,
                                  offset + static_cast<double>(i)});
    return Dataset(std::move(recs), 1);
}

std::set<double> g_values(const Dataset& ds) {
    std::set<double> out;
    for (const auto& r : ds.records()) out.insert(r.g);
    return out;
}
} // namespace

TEST_CASE("split_dataset") {
    SECTION("covering disjoint split of expected sizes") {
        auto ds = indexed_dataset(10);
        auto [a, b] = split_dataset(ds, 0.5, 42);
        CHECK(a.size() == 5);
        CHECK(b.size() == 5);
        auto ga = g_values(a), gb = g_values(b);
        std::set<double> all;
        all.insert(ga.begin(), ga.end());
        all.insert(gb.begin(), gb.end());
        CHECK(all.size() == 10);
        CHECK(a.g_inf() <= 9.0);
    }
    SECTION("deterministic in the seed") {
        auto ds = indexed_dataset(17);
        auto [a1, b1] = split_dataset(ds, 0.3, 5);
        auto [a2, b2] = split_dataset(ds, 0.3, 5);
        CHECK(g_values(a1) == g_values(a2));
        auto [a3, b3] = split_dataset(ds, 0.3, 6);
        CHECK(g_values(a1) != g_values(a3));
    }
    SECTION("round half up") {
        auto ds = indexed_dataset(3);
        auto [a, b] = split_dataset(ds, 0.5, 1);
        CHECK(a.size() == 2);
        CHECK(b.size() == 1);
    }
    SECTION("depends only on (N, fraction, seed)") {
        auto ds1 = indexed_dataset(12);
        auto ds2 = indexed_dataset(12, 100.0);
        auto [a1, b1] = split_dataset(ds1, 0.4, 9);
        auto [a2, b2] = split_dataset(ds2, 0.4, 9);
        std::set<double> shifted;
        for (double g : g_values(a1)) shifted.insert(g + 100.0);
        CHECK(shifted == g_values(a2));
    }
    SECTION("per-part g_inf is recomputed") {
        auto ds = indexed_dataset(6);
        auto [a, b] = split_dataset(ds, 0.5, 3);
        for (const auto* part : {&a, &b}) {
            double expect = 0.0;
            for (const auto& r : part->records()) expect = std::max(expect, std::abs(r.g));
            CHECK(part->g_inf() == expect);
        }
    }
    SECTION("empty dataset") {
        Dataset empty;
        CHECK_THROWS_AS(split_dataset(empty, 0.5, 1), EmptyDataset);
    }
}
