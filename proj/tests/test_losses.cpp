#include <doctest.h>

#include <cmath>

#include "hams/hungarian.hpp"
#include "hams/losses.hpp"
#include "hams/rng.hpp"
#include "test_util.hpp"

using namespace hams;

namespace {

Pointmap random_pointmap(Rng& rng, int w, int h) {
    Pointmap pm;
    pm.points = VecGrid(w, h);
    for (auto& p : pm.points.data) p = Vec3(rng.normal(), rng.normal(), rng.normal() + 3.0);
    return pm;
}

// flatten/unflatten helpers for gradient checks
std::vector<double> flatten_points(const VecGrid& g) {
    std::vector<double> out;
    for (const Vec3& p : g.data) {
        out.push_back(p.x());
        out.push_back(p.y());
        out.push_back(p.z());
    }
    return out;
}

void unflatten_points(VecGrid& g, const std::vector<double>& x) {
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] = Vec3(x[3 * i], x[3 * i + 1], x[3 * i + 2]);
}

}  // namespace

TEST_CASE("confidence regression loss values") {
    const int w = 6, h = 4;
    Rng rng(1);
    Pointmap truth = random_pointmap(rng, w, h);
    Pointmap pred = truth;
    ConfidenceMap conf(w, h, 1.0);
    MaskGrid valid(w, h, 1);

    CHECK(confidence_regression_loss(pred, truth, conf, valid, 0.2).value ==
          doctest::Approx(0.0));

    for (auto& p : pred.points.data) p.x() += 0.5;
    CHECK(confidence_regression_loss(pred, truth, conf, valid, 0.2).value ==
          doctest::Approx(0.5).epsilon(1e-12));

    ConfidenceMap bad(w, h, 0.5);
    CHECK_THROWS(confidence_regression_loss(pred, truth, bad, valid, 0.2));

    Pointmap small;
    small.points = VecGrid(2, 2);
    CHECK_THROWS_AS(confidence_regression_loss(small, truth, conf, valid, 0.2), ShapeMismatch);
}

TEST_CASE("confidence regression loss gradients") {
    const int w = 5, h = 3;
    Rng rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        Pointmap truth = random_pointmap(rng, w, h);
        Pointmap pred = random_pointmap(rng, w, h);
        ConfidenceMap conf(w, h, 1.0);
        for (auto& c : conf.data) c = rng.uniform(1.0, 5.0);
        MaskGrid valid(w, h, 1);
        for (auto& v : valid.data) v = rng.uniform() < 0.8 ? 1 : 0;

        LossValue lv = confidence_regression_loss(pred, truth, conf, valid, 0.2);
        auto f_pred = [&](const std::vector<double>& x) {
            Pointmap p = pred;
            unflatten_points(p.points, x);
            return confidence_regression_loss(p, truth, conf, valid, 0.2).value;
        };
        CHECK(test::gradient_check(f_pred, flatten_points(pred.points), lv.gradients["pred"]) <
              1e-4);
        auto f_conf = [&](const std::vector<double>& x) {
            ConfidenceMap c = conf;
            c.data = x;
            return confidence_regression_loss(pred, truth, c, valid, 0.2).value;
        };
        CHECK(test::gradient_check(f_conf, conf.data, lv.gradients["conf"]) < 1e-4);
    }
}

TEST_CASE("infonce closed forms") {
    // 2 matches, matched dot 1, cross dot 0, temperature 1
    DescGrid d0(2, 1, 2), d1(2, 1, 2);
    d0.at(0, 0)[0] = 1;
    d0.at(1, 0)[1] = 1;
    d1.at(0, 0)[0] = 1;
    d1.at(1, 0)[1] = 1;
    std::vector<PixelMatch> matches = {{0, 0, 0, 0}, {1, 0, 1, 0}};
    double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
    CHECK(infonce_matching_loss(d0, d1, matches, 1.0).value ==
          doctest::Approx(expected).epsilon(1e-9));

    // identical descriptors everywhere -> log N
    const int n = 5;
    DescGrid e0(n, 1, 3), e1(n, 1, 3);
    for (int x = 0; x < n; ++x) {
        e0.at(x, 0)[0] = 1;
        e1.at(x, 0)[0] = 1;
    }
    std::vector<PixelMatch> ms;
    for (int x = 0; x < n; ++x) ms.push_back({x, 0, x, 0});
    CHECK(infonce_matching_loss(e0, e1, ms, 0.5).value ==
          doctest::Approx(std::log(n)).epsilon(1e-9));

    CHECK_THROWS_AS(infonce_matching_loss(e0, e1, {}, 1.0), EmptyMatchSet);
}

TEST_CASE("infonce gradients") {
    Rng rng(3);
    const int w = 4, h = 3, d = 5;
    DescGrid d0(w, h, d), d1(w, h, d);
    for (auto& v : d0.data) v = rng.normal();
    for (auto& v : d1.data) v = rng.normal();
    std::vector<PixelMatch> matches = {{0, 0, 1, 0}, {1, 1, 2, 1}, {3, 2, 0, 2}, {2, 0, 3, 1}};

    LossValue lv = infonce_matching_loss(d0, d1, matches, 0.3);
    auto f0 = [&](const std::vector<double>& x) {
        DescGrid g = d0;
        g.data = x;
        return infonce_matching_loss(g, d1, matches, 0.3).value;
    };
    CHECK(test::gradient_check(f0, d0.data, lv.gradients["desc0"]) < 1e-4);
    auto f1 = [&](const std::vector<double>& x) {
        DescGrid g = d1;
        g.data = x;
        return infonce_matching_loss(d0, g, matches, 0.3).value;
    };
    CHECK(test::gradient_check(f1, d1.data, lv.gradients["desc1"]) < 1e-4);
}

TEST_CASE("segmentation loss: perfect prediction and dice definition") {
    const int w = 8, h = 6;
    MaskGrid gt(w, h, 0);
    for (int y = 1; y < 4; ++y)
        for (int x = 2; x < 6; ++x) gt.at(x, y) = 1;

    Grid<double> logits(w, h, -40.0);
    for (int y = 1; y < 4; ++y)
        for (int x = 2; x < 6; ++x) logits.at(x, y) = 40.0;

    CHECK(segmentation_loss({logits}, {40.0}, {gt}).value < 1e-3);

    // disjoint saturated masks give dice exactly 1
    MaskGrid other(w, h, 0);
    other.at(0, 5) = 1;
    CHECK(dice_loss(logits, other) == doctest::Approx(1.0).epsilon(1e-9));

    CHECK_THROWS_AS(segmentation_loss({logits}, {0.0}, {gt, other}), TooManyInstances);
}

TEST_CASE("segmentation matching equals brute force") {
    Rng rng(5);
    const int w = 6, h = 5;
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<Grid<double>> logits(3, Grid<double>(w, h));
        std::vector<double> cls = {rng.normal(), rng.normal(), rng.normal()};
        for (auto& g : logits)
            for (auto& v : g.data) v = rng.normal();
        std::vector<MaskGrid> gts(2, MaskGrid(w, h, 0));
        for (auto& g : gts)
            for (auto& v : g.data) v = rng.uniform() < 0.4 ? 1 : 0;

        std::vector<double> cost = segmentation_matching_costs(logits, cls, gts);  // 3 x 2
        // hungarian on transposed (gt rows)
        std::vector<double> cost_t(2 * 3);
        for (int q = 0; q < 3; ++q)
            for (int g = 0; g < 2; ++g) cost_t[g * 3 + q] = cost[q * 2 + g];
        std::vector<int> assign = solve_assignment(cost_t, 2, 3);
        double got = cost[assign[0] * 2 + 0] + cost[assign[1] * 2 + 1];

        double best = 1e300;
        for (int q0 = 0; q0 < 3; ++q0)
            for (int q1 = 0; q1 < 3; ++q1)
                if (q0 != q1) best = std::min(best, cost[q0 * 2 + 0] + cost[q1 * 2 + 1]);
        CHECK(got == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("hungarian equals brute force on random matrices with negatives") {
    Rng rng(6);
    for (int trial = 0; trial < 30; ++trial) {
        int rows = rng.uniform_int(1, 4);
        int cols = rng.uniform_int(rows, 6);
        std::vector<double> cost(static_cast<size_t>(rows) * cols);
        for (auto& c : cost) c = rng.uniform(-5, 5);
        std::vector<int> assign = solve_assignment(cost, rows, cols);
        double got = 0.0;
        for (int r = 0; r < rows; ++r) got += cost[static_cast<size_t>(r) * cols + assign[static_cast<size_t>(r)]];

        // brute force over permutations of column subsets
        std::vector<int> cols_idx(static_cast<size_t>(cols));
        std::iota(cols_idx.begin(), cols_idx.end(), 0);
        double best = 1e300;
        std::vector<int> pick(static_cast<size_t>(rows), -1);
        std::function<void(int, double, uint32_t)> rec = [&](int r, double acc, uint32_t used) {
            if (r == rows) {
                best = std::min(best, acc);
                return;
            }
            for (int c = 0; c < cols; ++c)
                if (!(used & (1u << c))) rec(r + 1, acc + cost[static_cast<size_t>(r) * cols + c], used | (1u << c));
        };
        rec(0, 0.0, 0);
        CHECK(got == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("segmentation loss gradients and permutation invariance") {
    Rng rng(7);
    const int w = 5, h = 4;
    std::vector<Grid<double>> logits(3, Grid<double>(w, h));
    for (auto& g : logits)
        for (auto& v : g.data) v = rng.normal();
    std::vector<double> cls = {rng.normal(), rng.normal(), rng.normal()};
    std::vector<MaskGrid> gts(2, MaskGrid(w, h, 0));
    for (auto& g : gts)
        for (auto& v : g.data) v = rng.uniform() < 0.5 ? 1 : 0;

    LossValue lv = segmentation_loss(logits, cls, gts);

    // gradient vs finite differences (mask logits + class logits)
    std::vector<double> flat;
    for (const auto& g : logits) flat.insert(flat.end(), g.data.begin(), g.data.end());
    auto f_mask = [&](const std::vector<double>& x) {
        std::vector<Grid<double>> ls = logits;
        size_t off = 0;
        for (auto& g : ls) {
            std::copy(x.begin() + static_cast<long>(off), x.begin() + static_cast<long>(off + g.data.size()),
                      g.data.begin());
            off += g.data.size();
        }
        return segmentation_loss(ls, cls, gts).value;
    };
    CHECK(test::gradient_check(f_mask, flat, lv.gradients["mask_logits"]) < 1e-4);
    auto f_cls = [&](const std::vector<double>& x) {
        return segmentation_loss(logits, x, gts).value;
    };
    CHECK(test::gradient_check(f_cls, cls, lv.gradients["class_logits"]) < 1e-4);

    // permutation invariance
    std::vector<Grid<double>> logits_p = {logits[2], logits[0], logits[1]};
    std::vector<double> cls_p = {cls[2], cls[0], cls[1]};
    std::vector<MaskGrid> gts_p = {gts[1], gts[0]};
    CHECK(segmentation_loss(logits_p, cls_p, gts_p).value ==
          doctest::Approx(lv.value).epsilon(1e-12));
}

TEST_CASE("densepose loss") {
    const int w = 5, h = 4;
    Rng rng(8);
    VecGrid gt(w, h);
    for (auto& v : gt.data) v = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    MaskGrid valid(w, h, 1);

    CHECK(densepose_loss(gt, gt, valid).value == doctest::Approx(0.0));

    VecGrid off = gt;
    for (auto& v : off.data) v += Vec3(0.1, 0.1, 0.1);
    CHECK(densepose_loss(off, gt, valid).value == doctest::Approx(0.03).epsilon(1e-9));

    MaskGrid none(w, h, 0);
    LossValue empty = densepose_loss(off, gt, none);
    CHECK(empty.value == 0.0);
    for (double g : empty.gradients["pred"]) CHECK(g == 0.0);

    VecGrid pred(w, h);
    for (auto& v : pred.data) v = Vec3(rng.normal(), rng.normal(), rng.normal());
    MaskGrid some(w, h, 0);
    for (auto& v : some.data) v = rng.uniform() < 0.6 ? 1 : 0;
    LossValue lv = densepose_loss(pred, gt, some);
    auto f = [&](const std::vector<double>& x) {
        VecGrid p = pred;
        unflatten_points(p, x);
        return densepose_loss(p, gt, some).value;
    };
    CHECK(test::gradient_check(f, flatten_points(pred), lv.gradients["pred"]) < 1e-4);

    // invariance to pixels outside the valid set
    VecGrid outside = pred;
    for (size_t i = 0; i < outside.data.size(); ++i)
        if (!some.data[i]) outside.data[i] += Vec3(5, 5, 5);
    CHECK(densepose_loss(outside, gt, some).value == doctest::Approx(lv.value).epsilon(1e-12));
}

TEST_CASE("binary mask loss") {
    const int w = 6, h = 4;
    Rng rng(9);
    MaskGrid gt(w, h, 0);
    for (auto& v : gt.data) v = rng.uniform() < 0.5 ? 1 : 0;

    Grid<double> saturated(w, h);
    for (size_t i = 0; i < saturated.data.size(); ++i) saturated.data[i] = gt.data[i] ? 60.0 : -60.0;
    CHECK(binary_mask_loss(saturated, gt).value < 1e-6);

    Grid<double> zeros(w, h, 0.0);
    CHECK(binary_mask_loss(zeros, gt).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Grid<double> pred(w, h);
    for (auto& v : pred.data) v = rng.normal();
    LossValue lv = binary_mask_loss(pred, gt);
    auto f = [&](const std::vector<double>& x) {
        Grid<double> p = pred;
        p.data = x;
        return binary_mask_loss(p, gt).value;
    };
    CHECK(test::gradient_check(f, pred.data, lv.gradients["logits"]) < 1e-4);
}

TEST_CASE("total loss composition") {
    CHECK(total_loss(1, 0, 0, 0) == 1.0);
    CHECK(total_loss(0, 2, 3, 5) == 8.02);
    LossWeights off{0, 0, 0};
    CHECK(total_loss(7, 100, 100, 100, off) == 7.0);
}

TEST_CASE("losses are non-negative") {
    Rng rng(10);
    const int w = 5, h = 4;
    for (int trial = 0; trial < 20; ++trial) {
        VecGrid a(w, h), b(w, h);
        for (auto& v : a.data) v = Vec3(rng.normal(), rng.normal(), rng.normal());
        for (auto& v : b.data) v = Vec3(rng.normal(), rng.normal(), rng.normal());
        MaskGrid valid(w, h, 1);
        CHECK(densepose_loss(a, b, valid).value >= 0.0);

        Grid<double> logits(w, h);
        for (auto& v : logits.data) v = rng.normal() * 3;
        MaskGrid gt(w, h, 0);
        for (auto& v : gt.data) v = rng.uniform() < 0.5 ? 1 : 0;
        CHECK(binary_mask_loss(logits, gt).value >= 0.0);
        CHECK(segmentation_loss({logits}, {rng.normal()}, {gt}).value >= 0.0);

        // regression loss is non-negative whenever conf == 1
        Pointmap pa, pb;
        pa.points = a;
        pb.points = b;
        ConfidenceMap ones(w, h, 1.0);
        CHECK(confidence_regression_loss(pa, pb, ones, valid, 0.2).value >= 0.0);
    }
}
