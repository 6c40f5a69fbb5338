#include <sensekit/csi_model.hpp>
#include <sensekit/rng.hpp>

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace sensekit;
using namespace sensekit::csi;

namespace {

CsiStream make_stream(double duration, std::size_t samples, std::vector<Annotation> ann) {
    CsiStream s;
    s.duration = duration;
    s.samples.resize(samples * s.config.entries_per_sample());
    for (std::size_t i = 0; i < s.samples.size(); ++i) s.samples[i] = {static_cast<float>(i % 7), -0.5f};
    s.annotations = std::move(ann);
    return s;
}

CsiStream segmented() {
    return make_stream(10.0, 1000, {{0.0, 2.5, noac_id, 3, {}}, {2.5, 6.0, static_cast<int>(Activity::walk1), 3, {}}, {6.0, 10.0, noac_id, 3, {}}});
}

bool has(const std::vector<Violation>& v, const std::string& name) {
    for (const auto& x : v) {
        if (x.invariant == name) return true;
    }
    return false;
}

} // namespace

TEST(SimoConfig, WavelengthAndDefaults) {
    SimoConfig c;
    EXPECT_NEAR(c.wavelength(), 0.1223, 1e-4);  // quoted to four places, truncated
    EXPECT_DOUBLE_EQ(c.wavelength(), 299792458.0 / 2.45e9);
    EXPECT_EQ(c.entries_per_sample(), 128u);
    c.num_receivers = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ValidateStream, WellFormedStreamHasNoViolations) {
    EXPECT_TRUE(validate_stream(make_stream(10.0, 1000, {{0.0, 10.0, noac_id, std::nullopt, {}}})).empty());
    EXPECT_TRUE(validate_stream(segmented()).empty());
}

TEST(ValidateStream, SampleCountMismatch) {
    const auto v = validate_stream(make_stream(10.0, 999, {{0.0, 10.0, noac_id, std::nullopt, {}}}));
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].invariant, "sample-count");
}

TEST(ValidateStream, OverlappingAnnotations) {
    const auto v = validate_stream(make_stream(10.0, 1000, {{0.0, 4.0, noac_id, 1, {}}, {3.0, 10.0, 0, 1, {}}}));
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].invariant, "overlap");
    EXPECT_EQ(v[0].index, 1u);
}

TEST(ValidateStream, OtherInvariants) {
    EXPECT_TRUE(has(validate_stream(make_stream(10.0, 1000, {{0.0, 4.0, noac_id, 1, {}}, {5.0, 10.0, 0, 1, {}}})), "coverage"));
    EXPECT_TRUE(has(validate_stream(make_stream(10.0, 1000, {{0.0, 10.0, 9, 1, {}}})), "activity-range"));
    EXPECT_TRUE(has(validate_stream(make_stream(10.0, 1000, {})), "coverage"));
    EXPECT_TRUE(has(validate_stream(make_stream(10.0, 1000, {{0.0, 10.0, 0, 1, std::vector<Point2>(999)}})), "position-track-length"));
    EXPECT_TRUE(has(validate_stream(make_stream(1.0, 100, {{0.0, 1.0, 0, 1, std::vector<Point2>(100, Point2{400, 10})}})),
                    "position-track-area"));
    auto bad = make_stream(1.0, 100, {{0.0, 1.0, 0, 1, {}}});
    bad.samples[5] = {std::nanf(""), 0.0f};
    EXPECT_TRUE(has(validate_stream(bad), "finite"));
    auto ragged = make_stream(1.0, 100, {{0.0, 1.0, 0, 1, {}}});
    ragged.samples.pop_back();
    EXPECT_TRUE(has(validate_stream(ragged), "sample-shape"));
}

TEST(AnnotationAt, HalfOpenIntervalsClosedAtEnd) {
    const auto s = segmented();
    EXPECT_EQ(annotation_at(s, 0.0).activity, noac_id);
    EXPECT_EQ(annotation_at(s, 2.5).activity, static_cast<int>(Activity::walk1));
    EXPECT_EQ(annotation_at(s, 10.0).start, 6.0);
    EXPECT_THROW(annotation_at(s, -0.01), RangeError);
    EXPECT_THROW(annotation_at(s, 10.01), RangeError);
}

TEST(AnnotationAt, TotalOnValidStreams) {
    Rng rng(5);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Annotation> ann;
        double t = 0.0;
        for (int k = 0; k < 4; ++k) {
            const double e = t + u(rng);
            ann.push_back({t, e, k, 0, {}});
            t = e;
        }
        auto s = make_stream(t, expected_sample_count(t, 100.0), ann);
        s.duration = t;
        for (double q = 0.0; q <= t; q += 0.01) EXPECT_NO_THROW(annotation_at(s, q));
        EXPECT_NO_THROW(annotation_at(s, t));
    }
}

TEST(StreamFile, RoundTripIsBitExact) {
    auto s = segmented();
    s.stream_id = 42;
    s.annotations[1].position_track = std::vector<Point2>(350, Point2{12.25, 200.5});
    Rng rng(9);
    std::normal_distribution<float> n(0.0f, 1.0f);
    for (auto& v : s.samples) v = {n(rng), n(rng)};
    std::stringstream ss;
    write_stream(ss, s);
    EXPECT_EQ(ss.str().substr(0, 4), "CSI1");
    const auto back = read_stream(ss);
    EXPECT_EQ(back, s);
}

TEST(StreamFile, RejectsBadMagicAndTruncation) {
    std::stringstream bad("XXXX0000");
    EXPECT_THROW(read_stream(bad), DataError);
    std::stringstream ss;
    write_stream(ss, segmented());
    std::string bytes = ss.str();
    std::stringstream cut(bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(read_stream(cut), DataError);
}

TEST(Manifest, JsonRoundTrip) {
    Manifest m;
    m.seed = 7;
    m.num_users = 3;
    m.unseen_users = {2};
    m.entries.push_back({"streams/a.csi", 0, 1, static_cast<int>(Activity::fall), 2, Split::val, 99});
    m.entries.push_back({"streams/b.csi", 1, 2, static_cast<int>(Activity::walk4), 0, Split::unseen, 100});
    const auto j = manifest_to_json(m);
    EXPECT_EQ(j["streams"][0]["activity"], "fall");
    EXPECT_EQ(j["streams"][1]["split"], "unseen");
    const auto back = manifest_from_json(j);
    ASSERT_EQ(back.entries.size(), 2u);
    EXPECT_EQ(back.entries[1].split, Split::unseen);
    EXPECT_EQ(back.entries[0].seed, 99u);
    EXPECT_EQ(back.unseen_users, m.unseen_users);
    EXPECT_THROW(manifest_from_json(nlohmann::json::object()), DataError);
}

TEST(Labels, NamesRoundTrip) {
    for (int k = 0; k < num_activities; ++k) EXPECT_EQ(activity_from_name(activity_name(k)), k);
    EXPECT_EQ(activity_name(noac_id), "NoAc");
    EXPECT_THROW(activity_name(9), RangeError);
    EXPECT_THROW(activity_from_name("swim"), ConfigError);
    EXPECT_EQ(split_from_name("unseen-user"), Split::unseen);
    EXPECT_TRUE(is_walk(static_cast<int>(Activity::walk3)));
    EXPECT_FALSE(is_walk(static_cast<int>(Activity::run)));
}
