#include "lot/error.hpp"
#include "lot/metrics.hpp"

#include "oracle.hpp"

#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

using namespace lot;

TEST_CASE("identity and disjoint boxes") {
    const image_meta img{100, 100, std::nullopt};
    const pixel_rect a{10, 10, 30, 40};
    const auto same = compare(a, a, img);
    CHECK(same.iou == 1.0);
    CHECK(same.coverage == 1.0);
    CHECK(same.precision == 1.0);
    CHECK(same.center_distance == 0.0);
    const auto apart = compare(a, {50, 50, 60, 60}, img);
    CHECK(apart.iou == 0.0);
    CHECK(apart.coverage == 0.0);
    CHECK(apart.precision == 0.0);
}

TEST_CASE("left half against the full image") {
    const image_meta img{100, 100, std::nullopt};
    const double inter = oracle::pixel_intersection(0, 0, 50, 100, 0, 0, 100, 100);
    CHECK(inter == 5000.0);
    const auto c = compare({0, 0, 50, 100}, {0, 0, 100, 100}, img);
    CHECK(std::abs(c.iou - inter / (5000.0 + 10000.0 - inter)) <= 1e-9);
    CHECK(std::abs(c.coverage - 0.5) <= 1e-9);
    CHECK(std::abs(c.precision - 1.0) <= 1e-9);
    CHECK(std::abs(c.center_distance - 25.0 / std::sqrt(20000.0)) <= 1e-9);
    CHECK(std::abs(c.center_distance - 0.17678) <= 1e-5);
}

TEST_CASE("metric algebra on random integer boxes") {
    std::mt19937_64 g(4);
    const image_meta img{60, 40, std::nullopt};
    auto rnd_box = [&] {
        const int x1 = static_cast<int>(g() % 59), y1 = static_cast<int>(g() % 39);
        const int x2 = x1 + 1 + static_cast<int>(g() % static_cast<unsigned>(60 - x1));
        const int y2 = y1 + 1 + static_cast<int>(g() % static_cast<unsigned>(40 - y1));
        return std::array<int, 4>{x1, y1, std::min(x2, 60), std::min(y2, 40)};
    };
    for (int t = 0; t < 500; ++t) {
        const auto a = rnd_box(), b = rnd_box();
        const pixel_rect pa{double(a[0]), double(a[1]), double(a[2]), double(a[3])};
        const pixel_rect pb{double(b[0]), double(b[1]), double(b[2]), double(b[3])};
        const auto ab = compare(pa, pb, img), ba = compare(pb, pa, img);
        const double inter = oracle::pixel_intersection(a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3]);
        CHECK(std::abs(ab.coverage - inter / pb.area()) <= 1e-12);
        CHECK(std::abs(ab.precision - inter / pa.area()) <= 1e-12);
        CHECK(ab.iou <= std::min(ab.coverage, ab.precision) + 1e-15);
        CHECK(ab.iou == doctest::Approx(ba.iou).epsilon(1e-15));
        CHECK(ab.coverage == doctest::Approx(ba.precision).epsilon(1e-15));
        // shift both boxes and the image together
        const image_meta wide{80, 50, std::nullopt};
        const auto sh = compare({pa.x1 + 7, pa.y1 + 3, pa.x2 + 7, pa.y2 + 3}, {pb.x1 + 7, pb.y1 + 3, pb.x2 + 7, pb.y2 + 3},
                                wide);
        CHECK(sh.iou == doctest::Approx(ab.iou).epsilon(1e-12));
        CHECK(sh.coverage == doctest::Approx(ab.coverage).epsilon(1e-12));
    }
}

TEST_CASE("degenerate and out-of-image boxes") {
    const image_meta img{100, 100, std::nullopt};
    CHECK_THROWS_AS(compare({10, 10, 10, 20}, {0, 0, 50, 50}, img), invariant_error);
    CHECK_THROWS_AS(compare({0, 0, 50, 50}, {5, 5, 5, 5}, img), invariant_error);
    CHECK_THROWS_AS(compare({0, 0, 150, 50}, {0, 0, 50, 50}, img), invariant_error);
}

TEST_CASE("summaries") {
    const image_meta img{100, 100, std::nullopt};
    box_comparison c1{0.2, 0.5, 0.5, 0.1, {}, {}};
    box_comparison c2{0.6, 0.7, 0.9, 0.3, {}, {}};
    std::vector<labeled_comparison> v{{"weighted_centroid", c1}, {"weighted_centroid", c2}, {"min_max", c1},
                                      {"custom", c2}};
    const auto t = summarize(v);
    REQUIRE(t.size() == 3);
    CHECK(t[0].strategy == "min_max");
    CHECK(t[0].iou == doctest::Approx(0.2));
    CHECK(t[1].strategy == "weighted_centroid");
    CHECK(t[1].count == 2);
    CHECK(t[1].iou == doctest::Approx(0.4));
    CHECK(t[2].strategy == "custom");
    CHECK(to_csv(t).rfind("method,count,iou,coverage,precision,center_distance\nmin_max,1,0.2,", 0) == 0);
    (void)img;
}
