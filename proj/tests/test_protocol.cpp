#include <gtest/gtest.h>

#include "tdprobe/server.hpp"

using namespace tdprobe;

TEST(WireProtocol, RequestRoundTrip) {
  EXPECT_EQ(format_segment_request(7), "GET segment 7\n");
  EXPECT_EQ(parse_segment_request("GET segment 7"), 7u);
  EXPECT_FALSE(parse_segment_request("GET segment"));
  EXPECT_FALSE(parse_segment_request("GET segment x"));
  EXPECT_FALSE(parse_segment_request("GET segment 1 2"));
  EXPECT_FALSE(parse_segment_request("PUT segment 1"));
}

TEST(WireProtocol, ResponseHeader) {
  auto h = parse_segment_header("OK 3 2000000");
  EXPECT_EQ(h.index, 3u);
  EXPECT_EQ(h.length, 2'000'000u);
  EXPECT_THROW(parse_segment_header("ERR segment out of range"), ProtocolError);
  EXPECT_THROW(parse_segment_header("OK 3"), ProtocolError);
  EXPECT_THROW(parse_segment_header("HELLO"), ProtocolError);
}

TEST(Payload, DeterministicAndDistinct) {
  auto a = segment_payload("YouTube", 0, 10'001);
  EXPECT_EQ(a.size(), 10'001u);
  EXPECT_EQ(a, segment_payload("YouTube", 0, 10'001));
  EXPECT_NE(a, segment_payload("YouTube", 1, 10'001));
  EXPECT_NE(a, segment_payload("Netflix", 0, 10'001));
  // Incompressible-looking: every byte value shows up.
  std::array<int, 256> seen{};
  for (auto b : a) seen[static_cast<unsigned char>(b)]++;
  for (int c : seen) EXPECT_GT(c, 0);
}

TEST(BindService, Lookup) {
  SniIndex idx({ServiceProfile{"Netflix", "nflx.example", QosClass::video},
                ServiceProfile{"YouTube", "yt.example", QosClass::video}});
  EXPECT_EQ(bind_service("nflx.example", idx, UnknownSniPolicy::reject)->name, "Netflix");
  EXPECT_EQ(bind_service(std::nullopt, idx, UnknownSniPolicy::reject)->name, generic_profile().name);
  EXPECT_FALSE(bind_service("unknown.example", idx, UnknownSniPolicy::reject));
  EXPECT_EQ(bind_service("unknown.example", idx, UnknownSniPolicy::serve_generic)->name,
            generic_profile().name);
}

TEST(SegmentRequests, Bounds) {
  ServiceProfile p{"YouTube", "yt.example", QosClass::video};
  EXPECT_NO_THROW(validate_request({"YouTube", 9}, p));
  EXPECT_THROW(validate_request({"YouTube", 10}, p), ProtocolError);
}
