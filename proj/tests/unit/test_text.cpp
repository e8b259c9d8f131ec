#include <doctest.h>

#include "geoskill/text.hpp"

using namespace geoskill;

TEST_SUITE("text") {
  TEST_CASE("utf8 round trip keeps code points") {
    const std::string s = "Camí de l'Obac, Pyrénées, Москва, 東京";
    CHECK(text::encode_utf8(text::decode_utf8(s)) == s);
  }

  TEST_CASE("malformed utf8 becomes replacement characters") {
    const std::string bad = std::string("a") + char(0xC3) + "b";
    const auto cps = text::decode_utf8(bad);
    REQUIRE(cps.size() == 3);
    CHECK(cps[1] == U'�');
  }

  TEST_CASE("case folding covers latin, greek and cyrillic") {
    CHECK(text::to_lower("ÉCOLE") == "école");
    CHECK(text::to_lower("ΑΘΗΝΑ") == "αθηνα");
    CHECK(text::to_lower("МОСКВА") == "москва");
  }

  TEST_CASE("tokenize splits on punctuation and keeps non-ascii letters") {
    const auto t = text::tokenize("Carrer Major, 12 -- Andorra-la-Vella (AD)");
    const std::vector<std::string> want = {"carrer", "major", "12", "andorra", "la", "vella", "ad"};
    CHECK(t == want);
    CHECK(text::tokenize("Straße über Brücke") == std::vector<std::string>{"straße", "über", "brücke"});
    CHECK(text::tokenize("   ").empty());
  }

  TEST_CASE("normalize collapses whitespace and lowercases") {
    CHECK(text::normalize("  Yellow\t\tCENTER   lines \n") == "yellow center lines");
    CHECK(text::collapse_whitespace(" a  b ") == "a b");
  }

  TEST_CASE("iso2 accepts exactly two uppercase letters") {
    CHECK(text::is_iso2("AD"));
    CHECK_FALSE(text::is_iso2("ad"));
    CHECK_FALSE(text::is_iso2("AND"));
    CHECK_FALSE(text::is_iso2("A1"));
  }

  TEST_CASE("join") {
    CHECK(text::join({"a", "b", "c"}, ", ") == "a, b, c");
    CHECK(text::join({}, ",").empty());
  }
}
