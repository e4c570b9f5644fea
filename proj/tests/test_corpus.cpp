#include <gtest/gtest.h>

#include <fstream>

#include "lyricemb/corpus_io.hpp"
#include "support.hpp"

using namespace lyricemb;
using lyricemb::testing::TempDir;

TEST(Tokenize, LowercasesAndSplitsOnNonLetters) {
  EXPECT_EQ(tokenize("Hello, WORLD! it's 2night"),
            (std::vector<std::string>{"hello", "world", "it", "night"}));
}

TEST(Tokenize, DropsTokensOutsideLengthBounds) {
  EXPECT_EQ(tokenize("a bb ccccccccccccccc dddddddddddddddd"),
            (std::vector<std::string>{"bb", "ccccccccccccccc"}));
  TokenizerOptions opts;
  opts.min_token_len = 1;
  opts.max_token_len = 3;
  EXPECT_EQ(tokenize("a bb cccc", opts), (std::vector<std::string>{"a", "bb"}));
}

TEST(Tokenize, FoldsPrecomposedAndDecomposedAccents) {
  EXPECT_EQ(tokenize("Café CAFÉ café"), (std::vector<std::string>{"cafe", "cafe", "cafe"}));
  EXPECT_EQ(tokenize("Straße Œuvre ĳssel"), (std::vector<std::string>{"strasse", "oeuvre", "ijssel"}));
}

TEST(Tokenize, WithoutFoldingAccentedLettersSplitWords) {
  TokenizerOptions opts;
  opts.fold_accents = false;
  EXPECT_EQ(tokenize("naïve", opts), (std::vector<std::string>{"na", "ve"}));
}

TEST(Tokenize, NonLatinAndMalformedBytesAreSeparators) {
  EXPECT_EQ(tokenize("love\xE6\x84\x9Bheart"), (std::vector<std::string>{"love", "heart"}));
  EXPECT_EQ(tokenize("bad\xFF\xFE" "bytes"), (std::vector<std::string>{"bad", "bytes"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize("123 !!! ...").empty());
}

TEST(Tokenize, IsIdempotentOnItsOwnOutput) {
  const std::string text = "Ça va? Jürgen's Öl, señor. Ångström ÆSIR déjà-vu";
  const auto once = tokenize(text);
  std::string joined;
  for (const auto& t : once) joined += t + " ";
  EXPECT_EQ(tokenize(joined), once);
}

TEST(Truncate, KeepsFirstTokens) {
  std::vector<std::string> many(600, "x");
  many[0] = "first";
  const auto t = truncate_tokens(many);
  ASSERT_EQ(t.size(), kMaxDocumentTokens);
  EXPECT_EQ(t[0], "first");
  EXPECT_EQ(truncate_tokens({"a", "b"}, 512).size(), 2u);
  EXPECT_THROW(truncate_tokens({"a"}, 0), Error);
}

TEST(CorpusReader, SkipsMalformedLinesWithLineNumbers) {
  TempDir dir;
  const auto path = dir.file("c.jsonl");
  {
    std::ofstream out(path);
    out << R"({"doc_id":"d1","artist_id":"a","album_id":"x","language":"en","text":"one"})" << '\n'
        << "not json\n"
        << R"({"doc_id":"d2","artist_id":"a","language":"en"})" << '\n'
        << "\n"
        << R"({"doc_id":"d1","artist_id":"b","album_id":null,"language":"en","text":"dup"})" << '\n'
        << R"({"doc_id":"d3","artist_id":"b","album_id":null,"language":"fr","text":"trois"})" << '\n'
        << R"({"doc_id":"d4","artist_id":"b","album_id":7,"language":"en","text":"four"})" << '\n';
  }
  const auto loaded = load_corpus(path);
  ASSERT_EQ(loaded.documents.size(), 2u);
  EXPECT_EQ(loaded.documents[0].doc_id, "d1");
  EXPECT_EQ(loaded.documents[0].album_id, std::optional<std::string>("x"));
  EXPECT_EQ(loaded.documents[1].doc_id, "d3");
  EXPECT_FALSE(loaded.documents[1].album_id.has_value());
  ASSERT_EQ(loaded.errors.size(), 4u);
  EXPECT_EQ(loaded.errors[0].line, 2u);
  EXPECT_EQ(loaded.errors[1].line, 3u);
  EXPECT_EQ(loaded.errors[2].line, 5u);
  EXPECT_NE(loaded.errors[2].message.find("duplicate"), std::string::npos);
  EXPECT_EQ(loaded.errors[3].line, 7u);
}

TEST(CorpusReader, MissingFileThrows) { EXPECT_THROW(load_corpus("/nonexistent/c.jsonl"), Error); }

TEST(CorpusReader, WrittenLinesReadBack) {
  TempDir dir;
  const auto path = dir.file("c.jsonl");
  const std::vector<RawDocument> docs{{"d1", "a1", std::string("al"), "en", "line one\nline \"two\""},
                                      {"d2", "a2", std::nullopt, "de", "über"}};
  {
    std::ofstream out(path);
    for (const auto& d : docs) write_corpus_line(out, d);
  }
  const auto loaded = load_corpus(path);
  ASSERT_TRUE(loaded.errors.empty());
  ASSERT_EQ(loaded.documents.size(), 2u);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    EXPECT_EQ(loaded.documents[i].doc_id, docs[i].doc_id);
    EXPECT_EQ(loaded.documents[i].album_id, docs[i].album_id);
    EXPECT_EQ(loaded.documents[i].text, docs[i].text);
    EXPECT_EQ(loaded.documents[i].language, docs[i].language);
  }
}

TEST(Ingest, FiltersLanguageAndCountsTruncation) {
  std::string long_text;
  for (int i = 0; i < 520; ++i) long_text += "word ";
  const std::vector<RawDocument> raw{{"d1", "a", std::nullopt, "en", long_text},
                                     {"d2", "a", std::nullopt, "fr", "bonjour"},
                                     {"d3", "a", std::nullopt, "en", "1 2 3"}};
  const auto out = ingest(raw);
  ASSERT_EQ(out.documents.size(), 2u);
  EXPECT_EQ(out.documents[0].tokens.size(), 512u);
  EXPECT_TRUE(out.documents[1].empty());
  EXPECT_EQ(out.stats.skipped_language, 1u);
  EXPECT_EQ(out.stats.truncated, 1u);
  EXPECT_EQ(out.stats.empty_after_tokenize, 1u);
  EXPECT_EQ(out.stats.accepted, 2u);

  IngestOptions any;
  any.language = "";
  EXPECT_EQ(ingest(raw, any).documents.size(), 3u);
}

TEST(CorpusStats, CountsTokensAndLongestSequence) {
  const std::vector<TokenizedDocument> docs{lyricemb::testing::doc("a", "x y z"), lyricemb::testing::doc("b", "x")};
  const auto s = corpus_stats(docs);
  EXPECT_EQ(s.documents, 2u);
  EXPECT_EQ(s.tokens, 4u);
  EXPECT_EQ(s.max_sequence_length, 3u);
}
