#include "gradcheck.hpp"

#include <doctest.h>

TEST_SUITE("gradcheck") {

TEST_CASE("miniature gradients match central differences") {
    for (auto loss : {testing::Loss::elbo, testing::Loss::disc, testing::Loss::gen}) {
        CAPTURE(testing::to_string(loss));
        const auto r = testing::gradcheck(loss);
        INFO("checked " << r.checked << ", within 1e-3: " << r.within_1e3 << ", worst " << r.worst << " at "
                        << r.worst_name);
        CHECK(r.checked > 500);
        CHECK(r.fraction() >= 0.95);
        CHECK(r.worst < 1e-2);
    }
}

}
