#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "inferqa/text.hpp"

using namespace inferqa;

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("to_hex16 is fixed width lowercase") {
  CHECK(to_hex16(0) == "0000000000000000");
  CHECK(to_hex16(0xABCDEFULL) == "0000000000abcdef");
  CHECK(to_hex16(~0ULL) == "ffffffffffffffff");
}

TEST_CASE("trim and lowercase") {
  CHECK(trim("  a b \t\n") == "a b");
  CHECK(trim("   ").empty());
  CHECK(to_lower_ascii("MiXeD 123 \xC3\x89") == "mixed 123 \xC3\x89");
}

TEST_CASE("normalize_answer drops case, punctuation, articles and extra spaces") {
  CHECK(normalize_answer("The Beatles") == "beatles");
  CHECK(normalize_answer("  Lionel   Messi! ") == "lionel messi");
  CHECK(normalize_answer("an apple, a day") == "apple day");
  CHECK(normalize_answer("U.S.A.") == "usa");
  CHECK(normalize_answer("Theatre") == "theatre");
  CHECK(normalize_answer("").empty());
  CHECK(normalize_answer("the") .empty());
}

TEST_CASE("normalize_for_match turns punctuation into word breaks") {
  CHECK(normalize_for_match("Rock-and-roll, baby!") == "rock and roll baby");
  CHECK(normalize_for_match("U.S.A.") == "u s a");
  CHECK(split_words("rock and roll") == std::vector<std::string>{"rock", "and", "roll"});
  CHECK(split_words("").empty());
}

TEST_CASE("analyze splits on ASCII non-alphanumerics and keeps non-ASCII bytes") {
  CHECK(analyze("Spanish footballer's titles") ==
        std::vector<std::string>{"spanish", "footballer", "s", "titles"});
  CHECK(analyze("Caf\xC3\xA9 au lait") == std::vector<std::string>{"caf\xC3\xA9", "au", "lait"});
  CHECK(analyze("8,849 metres") == std::vector<std::string>{"8", "849", "metres"});
  CHECK(analyze(" ... ").empty());
}
