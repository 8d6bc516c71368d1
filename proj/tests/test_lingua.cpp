#include <doctest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "support.hpp"
#include "svasr/lingua.hpp"

using namespace svasr;
using svasr::test::Gen;

namespace {

using K = GrammarExpr::Kind;

/// Direct recursion on the AST: end positions reachable by matching an expression
/// from a start position, memoised per (expression, position).
class AstMatcher {
 public:
  AstMatcher(const GrammarAst& ast, const WordSequence& words) : ast_(ast), words_(words) {}

  bool accepts() { return match(ast_.top, 0).contains(words_.size()); }

 private:
  using Ends = std::set<std::size_t>;

  const Ends& match(const GrammarExpr& e, std::size_t pos) {
    const auto key = std::make_pair(&e, pos);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    Ends out = compute(e, pos);
    return memo_.emplace(key, std::move(out)).first->second;
  }

  Ends seq(const std::vector<GrammarExpr>& parts, std::size_t from) {
    Ends cur{from};
    for (const auto& p : parts) {
      Ends next;
      for (auto c : cur) next.merge(Ends(match(p, c)));
      cur = std::move(next);
    }
    return cur;
  }

  Ends star(const GrammarExpr& e, Ends frontier) {
    Ends seen = frontier;
    while (!frontier.empty()) {
      Ends next;
      for (auto c : frontier)
        for (auto n : seq(e.children, c))
          if (seen.insert(n).second) next.insert(n);
      frontier = std::move(next);
    }
    return seen;
  }

  Ends compute(const GrammarExpr& e, std::size_t pos) {
    switch (e.kind) {
      case K::word:
        if (pos < words_.size() && words_[pos] == e.name) return {pos + 1};
        return {};
      case K::rule_ref:
        return match(ast_.find_rule(e.name)->body, pos);
      case K::sequence:
        return seq(e.children, pos);
      case K::alternation: {
        Ends out;
        for (const auto& c : e.children) out.merge(Ends(match(c, pos)));
        return out;
      }
      case K::optional: {
        Ends out = seq(e.children, pos);
        out.insert(pos);
        return out;
      }
      case K::zero_or_more:
        return star(e, {pos});
      case K::one_or_more:
        return star(e, seq(e.children, pos));
    }
    return {};
  }

  const GrammarAst& ast_;
  const WordSequence& words_;
  std::map<std::pair<const GrammarExpr*, std::size_t>, Ends> memo_;
};

bool ast_accepts(const GrammarAst& ast, const WordSequence& words) { return AstMatcher(ast, words).accepts(); }

/// Random grammar text over the words a, b, c, with rules referring to earlier rules.
std::string random_grammar(Gen& gen) {
  std::vector<std::string> rules;
  std::function<std::string(int)> expr = [&](int depth) -> std::string {
    const int alts = depth > 2 ? 1 : gen.integer(1, 2);
    std::string out;
    for (int a = 0; a < alts; ++a) {
      if (a) out += " | ";
      const int items = gen.integer(1, depth > 2 ? 1 : 3);
      for (int i = 0; i < items; ++i) {
        if (i) out += ' ';
        const int choice = gen.integer(0, depth > 2 ? 1 : 6);
        if (choice == 0) out += gen.pick(std::vector<std::string>{"a", "b", "c"});
        else if (choice == 1 && !rules.empty()) out += (gen.coin() ? "$" : "") + gen.pick(rules);
        else if (choice == 1) out += "a";
        else if (choice == 2) out += "( " + expr(depth + 1) + " )";
        else if (choice == 3) out += "[ " + expr(depth + 1) + " ]";
        else if (choice == 4) out += "{ " + expr(depth + 1) + " }";
        else out += "< " + expr(depth + 1) + " >";
      }
    }
    return out;
  };
  std::string text;
  const int n_rules = gen.integer(0, 3);
  for (int r = 0; r < n_rules; ++r) {
    const std::string name = "R" + std::to_string(r);
    text += name + " = " + expr(0) + " ;\n";
    rules.push_back(name);
  }
  return text + "(" + expr(0) + ")\n";
}

void all_sequences(const std::vector<std::string>& alphabet, std::size_t max_len,
                   const std::function<void(const WordSequence&)>& visit) {
  WordSequence cur;
  std::function<void()> rec = [&] {
    visit(cur);
    if (cur.size() == max_len) return;
    for (const auto& w : alphabet) {
      cur.push_back(w);
      rec();
      cur.pop_back();
    }
  };
  rec();
}

}  // namespace

TEST_CASE("parse the task grammar") {
  const GrammarAst ast = parse_grammar(test::fig2_grammar());
  REQUIRE(ast.rules.size() == 7);
  const std::vector<std::string> names{"SWITCH_DGT", "SILENCE", "SWITCH_W", "ON_OFF", "CONT", "SIL_NOISE", "SENTENCE"};
  for (std::size_t i = 0; i < names.size(); ++i) CHECK(ast.rules[i].name == names[i]);
  CHECK(ast.top == GrammarExpr{K::sequence, {}, {GrammarExpr::ref("SILENCE"), GrammarExpr::ref("SENTENCE"), GrammarExpr::ref("SILENCE")}});
  // `$CONT` and bare `SWITCH_DGT` both resolve to rules.
  const GrammarRule* cont = ast.find_rule("CONT");
  REQUIRE(cont);
  CHECK(cont->body.kind == K::alternation);
  CHECK(cont->body.children[0] == GrammarExpr{K::one_or_more, {}, {GrammarExpr::ref("SWITCH_DGT")}});

  CHECK(word_list(ast) == std::vector<std::string>{"AIR_COND", "BATHROOM", "GARDEN", "HIDUP", "MATI", "NOISE", "NUM_0",
                                                   "NUM_1", "NUM_2", "NUM_3", "NUM_4", "OFF", "ON", "SIL"});
}

TEST_CASE("small grammars") {
  const GrammarAst alt = parse_grammar("A = x | y ; (A)");
  CHECK(alt.rules[0].body == GrammarExpr{K::alternation, {}, {GrammarExpr::word("x"), GrammarExpr::word("y")}});
  CHECK(word_list(parse_grammar("(Z)")) == std::vector<std::string>{"Z"});
  CHECK(word_list(parse_grammar("A = x ; (A)")) == std::vector<std::string>{"x"});
  CHECK(word_list(parse_grammar("A = x y ; B = y | z ; (A B)")) == std::vector<std::string>{"x", "y", "z"});

  const WordNetwork one = compile_network(parse_grammar("(x)"));
  CHECK(one.word_count() == 1);
  CHECK(one.successors[WordNetwork::kStart] == std::vector<std::size_t>{2});
  CHECK(one.successors[2] == std::vector<std::size_t>{WordNetwork::kEnd});

  const WordNetwork two = compile_network(alt);
  CHECK(two.word_count() == 2);
  CHECK(two.successors[WordNetwork::kStart].size() == 2);
}

TEST_CASE("grammar errors carry positions") {
  CHECK_THROWS_AS(parse_grammar("A = x | ; (A)"), GrammarError);
  CHECK_THROWS_AS(parse_grammar("(A $B)"), GrammarError);
  CHECK_THROWS_AS(parse_grammar("A = x ;\n(A"), GrammarError);
  try {
    parse_grammar("A = x ;\n(A $B)");
    FAIL("expected a GrammarError");
  } catch (const GrammarError& e) {
    CHECK(e.line() == 2);
    CHECK(e.column() == 4);
  }
}

TEST_CASE("task network acceptance") {
  const WordNetwork net = compile_network(parse_grammar(test::fig2_grammar()));
  // Every CONT is followed by at least one SIL_NOISE word, then the closing SILENCE.
  CHECK_FALSE(accepts(net, {"SIL", "NUM_1", "SIL"}));
  CHECK(accepts(net, {"SIL", "NUM_1", "SIL", "SIL"}));
  CHECK_FALSE(accepts(net, {"NUM_1"}));
  CHECK_FALSE(accepts(net, {"SIL", "GARDEN", "ON", "SIL"}));
  CHECK(accepts(net, {"SIL", "GARDEN", "ON", "SIL", "SIL"}));
  CHECK(accepts(net, {"SIL", "GARDEN", "ON", "NOISE", "SIL"}));
  CHECK(accepts(net, {"SIL", "SIL"}));
  CHECK(accepts(net, {"SIL", "NUM_3", "NUM_4", "SIL", "SIL"}));
  CHECK(accepts(net, {"SIL", "NUM_2", "NOISE", "SIL", "OFF", "SIL", "SIL"}));
  CHECK_FALSE(accepts(net, {"SIL", "GARDEN", "SIL"}));
  CHECK_FALSE(accepts(net, {}));
  for (std::size_t n = 0; n < net.size(); ++n) {
    if (n == WordNetwork::kStart || n == WordNetwork::kEnd) CHECK(net.labels[n].empty());
    else CHECK_FALSE(net.labels[n].empty());
  }
}

TEST_CASE("enumerate_sentences") {
  CHECK(enumerate_sentences(compile_network(parse_grammar("(x)")), 3) == std::set<WordSequence>{{"x"}});
  CHECK(enumerate_sentences(compile_network(parse_grammar("A = x ; ({A})")), 2) ==
        std::set<WordSequence>{{}, {"x"}, {"x", "x"}});

  const WordNetwork net = compile_network(parse_grammar(test::fig2_grammar()));
  std::set<WordSequence> previous;
  for (std::size_t n = 0; n <= 5; ++n) {
    const auto s = enumerate_sentences(net, n);
    for (const auto& seq : s) {
      CHECK(seq.size() <= n);
      CHECK(accepts(net, seq));
    }
    CHECK(std::includes(s.begin(), s.end(), previous.begin(), previous.end()));
    previous = s;
  }
  CHECK(previous.contains(WordSequence{"SIL", "GARDEN", "ON", "SIL", "SIL"}));
}

TEST_CASE("compiled networks agree with direct AST matching") {
  Gen gen(21);
  const std::vector<std::string> alphabet{"a", "b", "c"};
  for (int trial = 0; trial < 60; ++trial) {
    const std::string text = random_grammar(gen);
    CAPTURE(text);
    const GrammarAst ast = parse_grammar(text);
    CHECK(parse_grammar(unparse_grammar(ast)) == ast);

    const WordNetwork net = compile_network(ast);
    // Structure: labelled interior nodes, everything reachable and co-reachable.
    std::vector<bool> fwd(net.size()), bwd(net.size());
    std::function<void(std::size_t)> walk = [&](std::size_t n) {
      if (fwd[n]) return;
      fwd[n] = true;
      for (auto s : net.successors[n]) walk(s);
    };
    walk(WordNetwork::kStart);
    bwd[WordNetwork::kEnd] = true;
    for (bool changed = true; changed;) {
      changed = false;
      for (std::size_t n = 0; n < net.size(); ++n)
        for (auto s : net.successors[n])
          if (bwd[s] && !bwd[n]) bwd[n] = changed = true;
    }
    for (std::size_t n = 0; n < net.size(); ++n) {
      if (n != WordNetwork::kStart && n != WordNetwork::kEnd) CHECK_FALSE(net.labels[n].empty());
      if (net.size() > 2 || !net.successors[WordNetwork::kStart].empty()) {
        CHECK(fwd[n]);
        CHECK(bwd[n]);
      }
    }

    std::set<WordSequence> accepted;
    all_sequences(alphabet, 6, [&](const WordSequence& s) {
      const bool expected = ast_accepts(ast, s);
      CHECK(accepts(net, s) == expected);
      if (expected) accepted.insert(s);
    });
    CHECK(enumerate_sentences(net, 6) == accepted);
  }
}

TEST_CASE("unparse round trip on the task grammar") {
  const GrammarAst ast = parse_grammar(test::fig2_grammar());
  CHECK(parse_grammar(unparse_grammar(ast)) == ast);
}

TEST_CASE("lexicon") {
  const Lexicon lex = test::idswitch_lexicon();
  CHECK(lex.pronunciations("NUM_0") == std::vector<Pronunciation>{{"k", "oh", "s", "oh", "ng"}});
  CHECK(lex.pronunciations("NOISE") == std::vector<Pronunciation>{{"t", "sp"}, {"d", "sp"}});
  CHECK(lex.expand("NUM_1") == WordSequence{"NUM_1"});
  CHECK_FALSE(lex.is_contraction("NUM_1"));

  const Lexicon multi = parse_lexicon("NUM_3 t+ih ih-g+ah g-ah+ah\nNUM_3 ah-t+ih t-ih+g ih-g+ah uw-ah\n");
  REQUIRE(multi.pronunciations("NUM_3").size() == 2);
  CHECK(multi.pronunciations("NUM_3")[0] == Pronunciation{"t+ih", "ih-g+ah", "g-ah+ah"});

  CHECK_THROWS_AS(parse_lexicon("NUM_0 k oh\nNUM_1\n"), FormatError);
  CHECK(parse_lexicon("# only a comment\n\n").empty());
}

TEST_CASE("contractions") {
  CHECK(contraction_name("NUM_3", "NUM_4") == "NUM_3_4");
  CHECK(contraction_name("GARDEN", "ON") == "GARDEN_ON");

  const Lexicon base = test::idswitch_lexicon();
  const Pronunciation fig4{"t", "ih", "g", "ah", "m", "p", "ah", "t"};
  const Lexicon lex = add_contraction(base, "NUM_3", "NUM_4", fig4);
  CHECK(lex.pronunciations("NUM_3_4") == std::vector<Pronunciation>{fig4});
  CHECK(lex.expand("NUM_3_4") == WordSequence{"NUM_3", "NUM_4"});
  CHECK(lex.expand(WordSequence{"SIL", "NUM_3_4", "SIL"}) == WordSequence{"SIL", "NUM_3", "NUM_4", "SIL"});
  CHECK(phone_inventory(lex) == phone_inventory(base));

  const Lexicon twice = add_contraction(lex, "NUM_3", "NUM_4", {"t", "ih", "g", "m", "p", "ah", "t"});
  CHECK(twice.pronunciations("NUM_3_4").size() == 2);
  CHECK(twice.expand("NUM_3_4") == WordSequence{"NUM_3", "NUM_4"});

  CHECK_THROWS_AS(add_contraction(base, "NUM_3", "NUM_9", fig4), DomainError);

  // A dictionary line spelled as a contraction carries the expansion.
  const Lexicon file = parse_lexicon(read_text_file(test::data_dir() / "idswitch_contraction.dict"));
  CHECK(file.expand("NUM_3_4") == WordSequence{"NUM_3", "NUM_4"});
  CHECK(file.pronunciations("NUM_3_4") == std::vector<Pronunciation>{fig4});
  CHECK_FALSE(file.is_contraction("AIR_COND"));
}

TEST_CASE("phone inventory") {
  const Lexicon fig3 = parse_lexicon(
      "NOISE t sp\nNOISE d sp\nNUM_0 k oh s oh ng\nNUM_1 s ah t uh\nNUM_2 d uw ah\nNUM_3 t ih g ah\nNUM_4 ah m p ah t\n");
  CHECK(phone_inventory(fig3) ==
        std::vector<std::string>{"ah", "d", "g", "ih", "k", "m", "ng", "oh", "p", "s", "sp", "t", "uh", "uw"});
  CHECK(phone_inventory(Lexicon{}).empty());

  const Lexicon lex = test::idswitch_lexicon();
  const auto inv = phone_inventory(lex);
  const std::set<std::string> inventory(inv.begin(), inv.end());
  for (const auto& w : lex.words())
    for (const auto& p : lex.pronunciations(w)) {
      CHECK_FALSE(p.empty());
      for (const auto& ph : p) CHECK(inventory.contains(ph));
    }
}
