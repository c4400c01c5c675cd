#include "textguard/directory.hpp"

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <set>
#include <thread>

#include "support/tempdir.hpp"
#include "textguard/error.hpp"

namespace textguard::directory {
namespace {

struct Publisher {
  ratchet::IdentityKeyPair identity;
  ratchet::LocalPreKeys prekeys;

  Publisher(std::uint64_t seed, std::size_t one_time) {
    crypto::SeededEntropy e(seed);
    identity = ratchet::generate_identity(e);
    prekeys = ratchet::LocalPreKeys::generate(identity, one_time, e);
  }
  RegisterResult publish(DirectoryClient& dir, const std::string& user) const {
    return dir.register_user(user, prekeys.bundle(identity), prekeys.one_time_publics());
  }
};

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::CryptoFailure;
}

TEST(DirectoryService, RegisterAndFetchConsumesPrekeys) {
  DirectoryService svc;
  InProcessDirectory dir(svc);
  Publisher bob(1, 2);
  EXPECT_FALSE(bob.publish(dir, "bob").identity_changed);

  auto a = dir.fetch_bundle("bob");
  auto b = dir.fetch_bundle("bob");
  ASSERT_TRUE(a.one_time_prekey && b.one_time_prekey);
  EXPECT_NE(a.one_time_prekey->id, b.one_time_prekey->id);
  EXPECT_TRUE(a.signature_valid());
  auto c = dir.fetch_bundle("bob");
  EXPECT_FALSE(c.one_time_prekey);
  EXPECT_EQ(c.identity_pub, bob.identity.public_key);
}

TEST(DirectoryService, ReRegisterWithNewIdentityIsFlagged) {
  DirectoryService svc;
  InProcessDirectory dir(svc);
  Publisher(1, 1).publish(dir, "bob");
  EXPECT_FALSE(Publisher(1, 1).publish(dir, "bob").identity_changed);
  EXPECT_TRUE(Publisher(2, 1).publish(dir, "bob").identity_changed);
}

TEST(DirectoryService, ServedPrekeysAreNotReissuedOnRepublish) {
  DirectoryService svc;
  InProcessDirectory dir(svc);
  Publisher bob(1, 3);
  bob.publish(dir, "bob");
  auto first = dir.fetch_bundle("bob").one_time_prekey->id;
  bob.publish(dir, "bob");
  EXPECT_EQ(svc.one_time_remaining("bob"), 2u);
  for (int i = 0; i < 2; ++i) EXPECT_NE(dir.fetch_bundle("bob").one_time_prekey->id, first);
}

TEST(DirectoryService, BadSignatureRejected) {
  DirectoryService svc;
  Publisher bob(1, 1);
  auto bundle = bob.prekeys.bundle(bob.identity);
  bundle.prekey_signature[0] ^= 1;
  EXPECT_EQ(code_of([&] { svc.register_user("bob", bundle, {}); }), Errc::Rejected);
  EXPECT_EQ(code_of([&] { svc.fetch_bundle("bob"); }), Errc::NotFound);
}

TEST(DirectoryService, UnknownUserNotFound) {
  DirectoryService svc;
  EXPECT_EQ(code_of([&] { svc.fetch_bundle("ghost"); }), Errc::NotFound);
}

TEST(DirectoryService, ConcurrentFetchesGetDistinctPrekeys) {
  DirectoryService svc;
  InProcessDirectory dir(svc);
  Publisher(3, 100).publish(dir, "bob");
  std::vector<std::uint32_t> ids(100);
  std::vector<std::thread> threads;
  for (int t = 0; t < 100; ++t)
    threads.emplace_back([&, t] { ids[t] = dir.fetch_bundle("bob").one_time_prekey.value().id; });
  for (auto& th : threads) th.join();
  EXPECT_EQ(std::set<std::uint32_t>(ids.begin(), ids.end()).size(), 100u);
  EXPECT_EQ(svc.one_time_remaining("bob"), 0u);
}

TEST(DirectoryService, PersistsAcrossInstances) {
  testing::TempDir tmp;
  auto file = tmp / "dir.json";
  {
    DirectoryService svc(file);
    InProcessDirectory dir(svc);
    Publisher(4, 2).publish(dir, "bob");
    dir.fetch_bundle("bob");
  }
  DirectoryService again(file);
  EXPECT_EQ(again.one_time_remaining("bob"), 1u);
}

TEST(BundleJson, RoundTripAndValidation) {
  Publisher bob(5, 1);
  auto b = bob.prekeys.bundle(bob.identity);
  b.one_time_prekey = bob.prekeys.one_time_publics().front();
  EXPECT_EQ(bundle_from_json(bundle_to_json(b)), b);
  auto j = bundle_to_json(b);
  j["identity_pub"] = "AAAA";
  EXPECT_EQ(code_of([&] { bundle_from_json(j); }), Errc::BadRequest);
  EXPECT_EQ(code_of([&] { bundle_from_json(nlohmann::json::array()); }), Errc::BadRequest);
}

TEST(FileDirectory, SharedBetweenClients) {
  testing::TempDir tmp;
  FileDirectory one(tmp / "keys.json");
  FileDirectory two(tmp / "keys.json");
  Publisher(6, 2).publish(one, "bob");
  auto a = two.fetch_bundle("bob");
  auto b = one.fetch_bundle("bob");
  EXPECT_NE(a.one_time_prekey->id, b.one_time_prekey->id);
  EXPECT_EQ(code_of([&] { two.fetch_bundle("carol"); }), Errc::NotFound);
}

TEST(HttpDirectory, EndToEndOverLoopback) {
  DirectoryService svc;
  DirectoryServer server(svc);
  const int port = server.start("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  HttpDirectoryClient client("127.0.0.1", port);

  Publisher bob(7, 2);
  EXPECT_FALSE(bob.publish(client, "bob smith").identity_changed);
  EXPECT_TRUE(Publisher(8, 1).publish(client, "bob smith").identity_changed);
  bob.publish(client, "bob smith");
  auto fetched = client.fetch_bundle("bob smith");
  EXPECT_EQ(fetched.identity_pub, bob.identity.public_key);
  EXPECT_TRUE(fetched.one_time_prekey);
  EXPECT_EQ(code_of([&] { client.fetch_bundle("nobody"); }), Errc::NotFound);

  auto bad = bob.prekeys.bundle(bob.identity);
  bad.prekey_signature[1] ^= 4;
  EXPECT_EQ(code_of([&] { client.register_user("bob", bad, {}); }), Errc::Rejected);
  server.stop();
}

TEST(HttpDirectory, ConcurrentHttpFetchesAreDistinct) {
  DirectoryService svc;
  DirectoryServer server(svc);
  const int port = server.start("127.0.0.1", 0);
  InProcessDirectory local(svc);
  Publisher(9, 40).publish(local, "bob");
  std::vector<std::uint32_t> ids(40);
  std::vector<std::thread> threads;
  for (int t = 0; t < 40; ++t)
    threads.emplace_back([&, t] {
      HttpDirectoryClient c("127.0.0.1", port);
      ids[t] = c.fetch_bundle("bob").one_time_prekey.value().id;
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(std::set<std::uint32_t>(ids.begin(), ids.end()).size(), 40u);
}

TEST(HttpDirectory, UnreachableIsUnavailable) {
  HttpDirectoryClient client("127.0.0.1", 1);
  EXPECT_EQ(code_of([&] { client.fetch_bundle("bob"); }), Errc::DirectoryUnavailable);
}

TEST(HttpDirectory, UrlParsing) {
  EXPECT_NO_THROW(HttpDirectoryClient::from_url("http://localhost:8080/"));
  EXPECT_EQ(code_of([&] { HttpDirectoryClient::from_url("http://localhost:abc"); }), Errc::BadRequest);
}

}  // namespace
}  // namespace textguard::directory
