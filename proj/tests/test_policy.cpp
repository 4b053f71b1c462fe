#include <gtest/gtest.h>

#include "hello_capture.hpp"
#include "tdprobe/model.hpp"
#include "tdprobe/policy.hpp"

using namespace tdprobe;
using namespace tdprobe::testing;

namespace {

Policy policy(std::string match, std::string label, ActionKind kind = ActionKind::pass) {
  Policy p;
  p.match_sni = std::move(match);
  p.label = std::move(label);
  p.action.kind = kind;
  if (kind == ActionKind::throttle) p.action.rate_mbps = 1.0;
  return p;
}

}  // namespace

TEST(Policy, Matching) {
  EXPECT_TRUE(policy("yt.example", "YouTube").matches("YT.example"));
  EXPECT_FALSE(policy("yt.example", "YouTube").matches("xyt.example"));
  EXPECT_TRUE(policy("*.example", "any").matches("cdn.yt.example"));
  EXPECT_FALSE(policy("*.example", "any").matches("example"));
  EXPECT_TRUE(policy("*", "all").matches("whatever.test"));
}

TEST(Policy, ParsesFile) {
  auto ps = parse_policies(R"([
    {"match_sni": "yt.example", "label": "YouTube", "action": {"type": "throttle", "rate_mbps": 1.5}},
    {"match_sni": "nflx.example", "label": "Netflix",
     "action": {"type": "delayed_throttle", "rate_mbps": 1, "onset_s": 60, "burst_bytes": 8192}},
    {"match_sni": "a.example", "label": "A", "action": {"type": "reset_every", "segments": 1}},
    {"match_sni": "b.example", "label": "B", "action": {"type": "reset_every", "bytes": 1000000}},
    {"match_sni": "*", "label": "rest", "action": {"type": "stall", "duration_s": 30}},
    {"match_sni": "c.example", "label": "C", "action": {"type": "pass"}}
  ])");
  ASSERT_EQ(ps.size(), 6u);
  EXPECT_EQ(ps[0].action.kind, ActionKind::throttle);
  EXPECT_DOUBLE_EQ(ps[0].action.rate_mbps, 1.5);
  EXPECT_EQ(ps[0].action.burst_bytes, 4096u);
  EXPECT_EQ(ps[1].action.burst_bytes, 8192u);
  EXPECT_DOUBLE_EQ(ps[1].action.onset_s, 60.0);
  EXPECT_EQ(ps[2].action.reset_segments, 1u);
  EXPECT_EQ(ps[3].action.reset_bytes, 1'000'000u);
  EXPECT_DOUBLE_EQ(ps[4].action.stall_s, 30.0);
}

TEST(Policy, RejectsInvalid) {
  EXPECT_THROW(parse_policies("{}"), ParseError);
  EXPECT_THROW(parse_policies("[{"), ParseError);
  EXPECT_THROW(parse_policies(R"([{"match_sni":"a","label":"A","action":{"type":"throttle","rate_mbps":0}}])"),
               InvariantError);
  EXPECT_THROW(parse_policies(R"([{"match_sni":"a","label":"A","action":{"type":"delayed_throttle","rate_mbps":1,"onset_s":-1}}])"),
               InvariantError);
  EXPECT_THROW(parse_policies(R"([{"match_sni":"a","label":"A","action":{"type":"reset_every","segments":0}}])"),
               InvariantError);
  EXPECT_THROW(parse_policies(R"([{"match_sni":"a","label":"A","action":{"type":"teleport"}}])"),
               InvariantError);
  EXPECT_THROW(parse_policies(R"([{"label":"A","action":{"type":"pass"}}])"), ParseError);
}

TEST(Classify, Examples) {
  std::vector<Policy> table{policy("yt.example", "YouTube"), policy("*.example", "other")};
  auto yt = classify(capture_client_hello("yt.example"), table);
  EXPECT_EQ(yt.label, "YouTube");
  EXPECT_EQ(yt.sni, "yt.example");
  EXPECT_EQ(yt.policy, 0u);

  auto none = classify(capture_client_hello(""), table);
  EXPECT_EQ(none.label, "generic-https");
  EXPECT_FALSE(none.sni);

  auto nomatch = classify(capture_client_hello("host.test"), table);
  EXPECT_EQ(nomatch.label, "generic-https");
  EXPECT_EQ(nomatch.sni, "host.test");

  const std::string junk = "SSH-2.0-OpenSSH\r\n";
  auto raw = classify({reinterpret_cast<const std::byte*>(junk.data()), junk.size()}, table);
  EXPECT_EQ(raw.label, "unclassified");
}

TEST(Classify, FirstMatchWinsAndIsPure) {
  auto hello = capture_client_hello("yt.example");
  std::vector<Policy> table{policy("*", "all"), policy("yt.example", "YouTube")};
  EXPECT_EQ(classify(hello, table).label, "all");
  EXPECT_EQ(classify(hello, table), classify(hello, table));
  // Star matches only flows that carry a name.
  EXPECT_EQ(classify(capture_client_hello(""), table).label, "generic-https");
}

TEST(TokenBucket, RateOverLongWindow) {
  TokenBucket b(125'000.0, 4096, 0.0);  // 1 Mbps
  double t = 0.0;
  double sent = 0.0;
  while (t < 10.0) {
    const double chunk = 4096;
    t += b.wait_for(chunk, t);
    b.consume(chunk, t);
    sent += chunk;
  }
  EXPECT_NEAR(mbps(sent, t), 1.0, 0.01);
}

TEST(TokenBucket, BurstCapacity) {
  TokenBucket b(1000.0, 500.0, 0.0);
  EXPECT_DOUBLE_EQ(b.available(100.0), 500.0);
  b.consume(500, 100.0);
  EXPECT_DOUBLE_EQ(b.wait_for(250, 100.0), 0.25);
}
