#include <doctest.h>

#include <set>

#include "evorec/dataset.hpp"
#include "helpers.hpp"

using namespace evorec;

namespace {

std::string five_user_tsv() {
  // 5 users x 5 items, every user rates every item: already five-core.
  std::string s;
  int64_t ts = 0;
  for (int u = 0; u < 5; ++u) {
    for (int i = 0; i < 5; ++i) {
      s += testutil::id2("u", u) + "\t" + testutil::id2("i", (u + i) % 5) + "\t" +
           std::to_string(++ts) + "\t4\treview text\n";
    }
  }
  return s;
}

}  // namespace

TEST_CASE("load_interactions parses and sorts histories") {
  testutil::TempDir tmp("ds");
  write_file(tmp.path() / "x.tsv", "u1\ti1\t20\t4\t\nu1\ti2\t10\t5\tgreat\nu1\ti3\t30\t3\t\n");
  auto d = load_interactions(tmp.path() / "x.tsv");
  CHECK(d.users.size() == 1);
  CHECK(d.items.size() == 3);
  const auto& h = d.history("u1");
  REQUIRE(h.size() == 3);
  CHECK(d.interactions[h[0]].item == "i2");  // ts 10 first
  CHECK(d.interactions[h[1]].item == "i1");
  CHECK(d.interactions[h[2]].item == "i3");
  CHECK(d.interactions[h[0]].review == "great");
}

TEST_CASE("load_interactions rejects malformed rows") {
  testutil::TempDir tmp("ds");
  auto load = [&](const std::string& text) {
    write_file(tmp.path() / "bad.tsv", text);
    return load_interactions(tmp.path() / "bad.tsv");
  };
  CHECK_THROWS_AS(load("u1\ti1\t10\n"), ParseError);              // too few fields
  CHECK_THROWS_AS(load("u1\ti1\tnope\t4\t\n"), ParseError);       // bad timestamp
  CHECK_THROWS_AS(load("u1\ti1\t10\t6\t\n"), ParseError);         // rating > 5
  CHECK_THROWS_AS(load("u1\ti1\t10\t0.5\t\n"), ParseError);       // rating < 1
  CHECK_THROWS_AS(load("\ti1\t10\t4\t\n"), ParseError);           // empty user
  CHECK_THROWS_AS(load("u1\ti1\t10\t4\t\nu1\ti1\t10\t4\t\n"), DataError);  // duplicate
}

TEST_CASE("attributes default to UNKNOWN sentinel") {
  testutil::TempDir tmp("ds");
  write_file(tmp.path() / "x.tsv", "u1\ti1\t1\t4\t\n");
  auto d = load_interactions(tmp.path() / "x.tsv");
  CHECK(d.attributes.at("i1").category == "UNKNOWN");
  write_file(tmp.path() / "a.tsv", "i1\tbooks\tA Title\t9.99\n");
  load_attributes(d, tmp.path() / "a.tsv");
  CHECK(d.attributes.at("i1").category == "books");
  CHECK(*d.attributes.at("i1").price == doctest::Approx(9.99));
}

TEST_CASE("five-core removes sparse users and items until fixpoint") {
  auto d = testutil::make_block_dataset(8, 8, 6);
  // add a one-off user and a one-off item that must both be dropped
  InteractionRecord r1{"loner", "i00", 99999, 4.0, ""};
  InteractionRecord r2{"u00", "rare_item", 99998, 4.0, ""};
  d.interactions.push_back(r1);
  d.interactions.push_back(r2);
  d.reindex();
  auto f = apply_five_core(d);
  for (const auto& u : f.users) CHECK(f.history(u).size() >= 5);
  std::unordered_map<ItemId, int> icount;
  for (const auto& r : f.interactions) icount[r.item]++;
  for (const auto& [v, n] : icount) CHECK(n >= 5);
  CHECK(std::find(f.users.begin(), f.users.end(), "loner") == f.users.end());
  CHECK(std::find(f.items.begin(), f.items.end(), "rare_item") == f.items.end());
  CHECK(f.five_core_passes >= 1);
}

TEST_CASE("five-core is idempotent") {
  auto d = testutil::make_block_dataset(8, 8, 6);
  auto once = apply_five_core(d);
  auto twice = apply_five_core(once);
  CHECK(once.interactions.size() == twice.interactions.size());
  CHECK(twice.five_core_passes == once.five_core_passes + 1);  // the no-op pass still counts
}

TEST_CASE("leave-last-out partitions each history") {
  auto d = testutil::make_block_dataset(6, 10, 8);
  auto sd = leave_last_out_split(d, 42);
  for (const auto& [u, s] : sd.users) {
    const auto& h = d.history(u);
    CHECK(s.train.size() + 2 == h.size());
    CHECK(s.test == d.interactions[h.back()].item);
    CHECK(s.validation == d.interactions[h[h.size() - 2]].item);
    for (size_t i = 0; i < s.train.size(); ++i) CHECK(s.train[i] == d.interactions[h[i]].item);
  }
}

TEST_CASE("negatives never intersect the user's history") {
  auto d = testutil::make_block_dataset(6, 10, 8);
  auto sd = leave_last_out_split(d, 42);
  for (const auto& [u, s] : sd.users) {
    for (const auto& v : s.val_negatives) CHECK_FALSE(d.in_history(u, v));
    for (const auto& v : s.test_negatives) CHECK_FALSE(d.in_history(u, v));
    std::set<ItemId> uniq(s.val_negatives.begin(), s.val_negatives.end());
    CHECK(uniq.size() == s.val_negatives.size());
  }
}

TEST_CASE("negative shortfall is recorded when the pool is small") {
  auto d = testutil::make_block_dataset(6, 10, 8);
  auto sd = leave_last_out_split(d, 42, 99);
  for (const auto& [u, s] : sd.users) {
    size_t pool = d.items.size() - d.history(u).size();
    CHECK(s.val_negatives.size() == std::min<size_t>(99, pool));
    CHECK(s.negative_shortfall == static_cast<int>(99 - s.val_negatives.size()));
  }
}

TEST_CASE("split is deterministic per seed and differs across seeds") {
  auto d = testutil::make_block_dataset(6, 10, 8);
  auto a = leave_last_out_split(d, 1);
  auto b = leave_last_out_split(d, 1);
  auto c = leave_last_out_split(d, 2);
  bool all_equal = true, any_diff = false;
  for (size_t i = 0; i < a.users.size(); ++i) {
    all_equal &= a.users[i].second.val_negatives == b.users[i].second.val_negatives;
    any_diff |= a.users[i].second.val_negatives != c.users[i].second.val_negatives;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("split refuses histories shorter than 3") {
  testutil::TempDir tmp("ds");
  write_file(tmp.path() / "x.tsv", "u1\ti1\t1\t4\t\nu1\ti2\t2\t4\t\n");
  auto d = load_interactions(tmp.path() / "x.tsv");
  CHECK_THROWS_AS(leave_last_out_split(d, 1), DataError);
}

TEST_CASE("global_average_rating averages over all raters") {
  testutil::TempDir tmp("ds");
  write_file(tmp.path() / "x.tsv", "u1\ti1\t1\t5\t\nu2\ti1\t2\t3\t\nu2\ti2\t3\t4\t\n");
  auto d = load_interactions(tmp.path() / "x.tsv");
  CHECK(global_average_rating(d, "i1") == doctest::Approx(4.0));
  CHECK_THROWS_AS(global_average_rating(d, "nope"), DataError);
}

TEST_CASE("dataset directory round trip reproduces the split") {
  testutil::TempDir tmp("ds");
  auto d = apply_five_core(testutil::make_block_dataset(6, 10, 8));
  auto sd = leave_last_out_split(d, 77);
  save_dataset_dir(d, tmp.path() / "out", 77, {"synthetic"});
  auto loaded = load_dataset_dir(tmp.path() / "out");
  REQUIRE(loaded.users.size() == sd.users.size());
  for (size_t i = 0; i < sd.users.size(); ++i) {
    CHECK(loaded.users[i].first == sd.users[i].first);
    CHECK(loaded.users[i].second.train == sd.users[i].second.train);
    CHECK(loaded.users[i].second.val_negatives == sd.users[i].second.val_negatives);
    CHECK(loaded.users[i].second.test_negatives == sd.users[i].second.test_negatives);
  }
}

TEST_CASE("loading the tsv written by five_user_tsv works end to end") {
  testutil::TempDir tmp("ds");
  write_file(tmp.path() / "x.tsv", five_user_tsv());
  auto d = load_interactions(tmp.path() / "x.tsv");
  auto f = apply_five_core(d);
  CHECK(f.interactions.size() == d.interactions.size());  // already five-core
}
