#include <catch2/catch_amalgamated.hpp>

#include "trajkit/types.hpp"

#include "support/synthetic.hpp"

using namespace trajkit;

namespace {

Track well_formed_track() {
    Track t;
    t.track_id = 5;
    t.recording_id = "00";
    t.location_id = "1";
    t.agent_class = AgentClass::car;
    t.sample_hz = 25.0;
    for (int i = 0; i < 3; ++i) {
        TrackRecord r;
        r.frame = i;
        r.track_id = 5;
        r.recording_id = "00";
        r.location_id = "1";
        r.agent_class = AgentClass::car;
        r.x = 1.0 * i;
        r.y = 2.0 * i;
        r.heading_deg = 90.0;
        t.records.push_back(r);
    }
    return t;
}

} // namespace

TEST_CASE("validate_track accepts a well-formed track") {
    CHECK(validate_track(well_formed_track()).empty());
}

TEST_CASE("validate_track reports non-monotonic frames at the offending index") {
    Track t = well_formed_track();
    t.records[1].frame = 2;
    t.records[2].frame = 1;
    const auto issues = validate_track(t);
    REQUIRE(issues.size() == 1);
    CHECK(issues[0].kind == ValidationKind::non_monotonic_frames);
    CHECK(issues[0].record_index == 2);
}

TEST_CASE("validate_track reports out-of-range heading") {
    Track t = well_formed_track();
    t.records[1].heading_deg = 361.0;
    const auto issues = validate_track(t);
    REQUIRE(issues.size() == 1);
    CHECK(issues[0].kind == ValidationKind::heading_out_of_range);
    CHECK(issues[0].record_index == 1);
}

TEST_CASE("validate_track reports non-finite coordinates") {
    Track t = well_formed_track();
    t.records[0].x = std::numeric_limits<double>::quiet_NaN();
    const auto issues = validate_track(t);
    REQUIRE(issues.size() == 1);
    CHECK(issues[0].kind == ValidationKind::non_finite_coordinate);
}

TEST_CASE("validate_track skips the heading range check for dhw-substituted tracks") {
    Track t = well_formed_track();
    t.heading_is_dhw = true;
    t.records[1].heading_deg = 412.5; // a plausible headway in meters
    CHECK(validate_track(t).empty());
}

TEST_CASE("validate_track is idempotent on a valid track") {
    const Track t = well_formed_track();
    CHECK(validate_track(t).empty());
    CHECK(validate_track(t).empty());
}

TEST_CASE("heading canonicalization folds into [0, 360)") {
    CHECK(canonical_heading_deg(0.0) == 0.0);
    CHECK(canonical_heading_deg(-90.0) == 270.0);
    CHECK(canonical_heading_deg(360.0) == 0.0);
    CHECK(canonical_heading_deg(725.0) == Catch::Approx(5.0));
    CHECK(radians_to_heading_deg(-3.14159265358979323846 / 2.0) == Catch::Approx(270.0));
}

TEST_CASE("agent class labels cover every dataset spelling") {
    CHECK(agent_class_from_label("car") == AgentClass::car);
    CHECK(agent_class_from_label("Car") == AgentClass::car);
    CHECK(agent_class_from_label("Truck") == AgentClass::truck);
    CHECK(agent_class_from_label("truck_bus") == AgentClass::truck);
    CHECK(agent_class_from_label("pedestrian/bicycle") == AgentClass::pedestrian);
    CHECK(agent_class_from_label("hovercraft") == AgentClass::other);
}
