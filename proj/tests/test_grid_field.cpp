#include <catch2/catch_amalgamated.hpp>

#include "sir/grid_field.hpp"

using namespace sir;

TEST_CASE("grid field mass and sampling", "[grid]") {
    GridField g(64, 2.0);
    CHECK(g.mass() == Catch::Approx(2.0));
    CHECK(g.sample({0.5, 0.5}) == 2.0);

    auto ramp = GridField::from_function(64, [](double x, double) { return x; });
    CHECK(ramp.mass() == Catch::Approx(0.5).margin(1e-12));
    // cell-center sampling: value at cell of x=0.3
    CHECK(ramp.sample({0.3, 0.9}) == Catch::Approx(ramp.at(ramp.cell_index_1(0.3), 0)));
}

TEST_CASE("grid field coarsening preserves mass", "[grid]") {
    auto f = GridField::from_function(128, [](double x, double y) { return x * y + 1.0; });
    auto c = f.coarsened(2);
    CHECK(c.n() == 64);
    CHECK(c.mass() == Catch::Approx(f.mass()).margin(1e-12));
}

TEST_CASE("grid field arithmetic", "[grid]") {
    GridField a(64, 1.0), b(64, 2.5);
    a += b;
    CHECK(a.at(3, 3) == 3.5);
    a -= b;
    CHECK(a.at(3, 3) == 1.0);
    a *= 4.0;
    CHECK(a.max_value() == 4.0);
    CHECK(a.min_value() == 4.0);
    CHECK(a.dot(b) == Catch::Approx(10.0));
}
