#include <gtest/gtest.h>

#include <cfloat>
#include <cmath>
#include <future>
#include <limits>
#include <thread>

#include "coadapt/bridge.hpp"
#include "gen.hpp"
#include "frames.hpp"
#include "loopback.hpp"

using namespace coadapt;

namespace {

void expect_protocol_error(const std::string& line, ProtocolCode code) {
  try {
    decode_frame(line);
    ADD_FAILURE() << "accepted '" << line << "'";
  } catch (const ProtocolError& e) {
    EXPECT_EQ(e.code(), code) << e.what();
    EXPECT_EQ(e.line(), line);
  }
}

PolicyServer machine_server(std::uint64_t seed = 1) {
  const auto agents = DualAgents::create(seed, PPOHyper{});
  return PolicyServer(agents.human.actor, agents.machine.actor);
}

}  // namespace

TEST(Frames, EncodeAct) { EXPECT_EQ(encode_frame(ActFrame{7, 1, 0}), "ACT,7,1,0\n"); }

TEST(Frames, DecodeAct) { EXPECT_EQ(std::get<ActFrame>(decode_frame("ACT,7,1,0\n")), (ActFrame{7, 1, 0})); }

TEST(Frames, ObsFieldCounts) {
  const std::string line = encode_frame(ObsFrame{3, 0, {0.5, -1, 0, 2, 1e-3}});
  EXPECT_EQ(std::count(line.begin(), line.end(), ','), 3 + 4);
  EXPECT_EQ(line, "OBS,3,0,0.5,-1,0,2,0.001\n");
  EXPECT_THROW(encode_frame(ObsFrame{3, 0, {1, 2, 3, 4, 5, 6}}), InvalidArgument);
  EXPECT_THROW(encode_frame(ObsFrame{3, 1, {1, 2, 3, 4, NAN, 6}}), InvalidArgument);
}

TEST(Frames, MalformedRejected) {
  expect_protocol_error("ACT,7,1\n", ProtocolCode::Malformed);
  expect_protocol_error("XYZ,1,0,0\n", ProtocolCode::UnknownKind);
  expect_protocol_error("ACT,7,1,0", ProtocolCode::Malformed);
  expect_protocol_error("ACT,-7,1,0\n", ProtocolCode::Malformed);
  expect_protocol_error("ACT,7,2,0\n", ProtocolCode::BadAgent);
  expect_protocol_error("ACT,7,1,2\n", ProtocolCode::Malformed);
  expect_protocol_error("OBS,1,0,1,2,3,4\n", ProtocolCode::Malformed);
  expect_protocol_error("OBS,1,0,1,2,x,4,5\n", ProtocolCode::Malformed);
  expect_protocol_error("OBS,1,0,1,2,nan,4,5\n", ProtocolCode::Malformed);
  expect_protocol_error("OBS,1,0,1,2,,4,5\n", ProtocolCode::Malformed);
  expect_protocol_error("BYE,0,0,1\n", ProtocolCode::Malformed);
  expect_protocol_error("\n", ProtocolCode::UnknownKind);
}

TEST(FrameProperty, RoundTrip) {
  testgen::Gen g(81);
  for (int i = 0; i < 1000; ++i) {
    const Frame f = framegen::random_frame(g);
    const std::string line = encode_frame(f);
    ASSERT_TRUE(framegen::bit_equal(decode_frame(line), f)) << line;
    ASSERT_EQ(encode_frame(decode_frame(line)), line);
  }
}

TEST(Server, AnswersObsWithEchoingAct) {
  PolicyServer s = machine_server();
  const auto reply = decode_frame(s.handle_line("OBS,12,1,0.1,0.2,0.3,0.4,0,0.5\n"));
  const auto& act = std::get<ActFrame>(reply);
  EXPECT_EQ(act.step, 12u);
  EXPECT_EQ(act.agent, 1);
  EXPECT_EQ(s.handle_line("OBS,12,1,0.1,0.2,0.3,0.4,0,0.5\n"), encode_frame(act));
}

TEST(Server, ErrorsKeepTheConnectionUsable) {
  PolicyServer s = machine_server();
  EXPECT_EQ(s.handle_line("OBS,1,3,0\n"), "ERR,0,0,3\n");
  EXPECT_EQ(s.handle_line("garbage\n"), "ERR,0,0,2\n");
  EXPECT_EQ(s.handle_line("ACT,4,1,0\n"), "ERR,4,1,4\n");
  EXPECT_FALSE(s.closed());
  EXPECT_EQ(s.handle_line("OBS,2,0,0,0,0,0,0\n").substr(0, 8), "ACT,2,0,");
  EXPECT_EQ(s.handle_line("BYE,0,0\n"), "BYE,0,0\n");
  EXPECT_TRUE(s.closed());
}

TEST(Server, MissingPolicy) {
  const auto agents = DualAgents::create(1, PPOHyper{});
  PolicyServer s(std::nullopt, agents.machine.actor);
  EXPECT_EQ(s.handle_line("OBS,5,0,0,0,0,0,0\n"), "ERR,5,0,5\n");
}

TEST(Server, RejectsMismatchedCheckpoint) {
  const auto agents = DualAgents::create(1, PPOHyper{});
  EXPECT_THROW(PolicyServer(agents.machine.actor, std::nullopt), InvalidArgument);
  EXPECT_THROW(PolicyServer(std::nullopt, agents.machine.critic), InvalidArgument);
}

TEST(ServerProperty, OneReplyPerLineNeverTwoActs) {
  testgen::Gen g(82);
  PolicyServer s = machine_server(2);
  for (int i = 0; i < 2000; ++i) {
    std::string line;
    if (g.coin(0.7)) {
      const int agent = g.integer(0, 1);
      line = encode_frame(ObsFrame{static_cast<std::uint64_t>(i), agent, g.vec(obs_field_count(agent), -3, 3)});
    } else {
      line = encode_frame(framegen::random_frame(g));
      if (g.coin(0.3)) line.insert(static_cast<std::size_t>(g.integer(0, static_cast<int>(line.size()) - 1)), ",");
    }
    const std::string reply = s.handle_line(line);
    ASSERT_EQ(std::count(reply.begin(), reply.end(), '\n'), 1);
    const bool is_obs = line.rfind("OBS", 0) == 0;
    if (reply.rfind("ACT", 0) == 0) {
      ASSERT_TRUE(is_obs) << line;
      ASSERT_EQ(std::get<ActFrame>(decode_frame(reply)).step, std::get<ObsFrame>(decode_frame(line)).step);
    }
    s.reopen();
  }
}

TEST(Socket, EndpointParsing) {
  const auto e = parse_endpoint("localhost:5555");
  EXPECT_EQ(e.host, "localhost");
  EXPECT_EQ(e.port, 5555);
  EXPECT_THROW(parse_endpoint("5555"), InvalidArgument);
  EXPECT_THROW(parse_endpoint("host:99999"), InvalidArgument);
  EXPECT_THROW(parse_endpoint("host:x"), InvalidArgument);
}

TEST(Socket, LoopbackMatchesInProcess) {
  const auto agents = DualAgents::create(6, PPOHyper{});
  for (std::uint64_t seed : {1, 2}) {
    const auto r = loopback::run(agents, EnvConfig{}, load_setting(4), seed);
    ASSERT_EQ(r.in_process.records.size(), 800u);
    EXPECT_TRUE(r.in_process.records == r.bridged.records);
  }
}

TEST(Socket, RawProtocolErrorsOverTheWire) {
  PolicyServer server = machine_server();
  std::promise<std::uint16_t> port;
  ServeOptions opt;
  opt.max_connections = 1;
  opt.on_listening = [&](std::uint16_t p) { port.set_value(p); };
  std::thread serving([&] { serve_policies({"127.0.0.1", 0}, server, opt); });
  {
    BridgeClient c({"127.0.0.1", port.get_future().get()});
    EXPECT_EQ(std::get<ErrFrame>(c.request(ActFrame{3, 1, 0})).code, static_cast<int>(ProtocolCode::UnexpectedKind));
    const std::vector<double> obs{0, 0, 0, 0, 0, 0};
    const int a = c.act(9, 1, obs);
    EXPECT_TRUE(a == 0 || a == 1);
  }
  serving.join();
}

TEST(Socket, ConcurrentClientRefused) {
  PolicyServer server = machine_server();
  std::promise<std::uint16_t> port;
  ServeOptions opt;
  opt.max_connections = 1;
  opt.refuse_concurrent = true;
  opt.on_listening = [&](std::uint16_t p) { port.set_value(p); };
  std::thread serving([&] { serve_policies({"127.0.0.1", 0}, server, opt); });
  const std::uint16_t p = port.get_future().get();
  {
    BridgeClient first({"127.0.0.1", p});
    const std::vector<double> obs{0, 0, 0, 0, 0, 0};
    first.act(0, 1, obs);
    Socket second(::socket(AF_INET, SOCK_STREAM, 0));
    const sockaddr_in addr = resolve({"127.0.0.1", p});
    ASSERT_EQ(::connect(second.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)), 0);
    first.act(1, 1, obs);  // lets the server notice the second client
    const auto line = second.read_line();
    ASSERT_TRUE(line.has_value());
    EXPECT_EQ(*line, "ERR,0,0,6\n");
  }
  serving.join();
}
