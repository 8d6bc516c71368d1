#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "svasr/error.hpp"

namespace svasr {

using WordSequence = std::vector<std::string>;
using Pronunciation = std::vector<std::string>;

class GrammarError : public Error {
 public:
  GrammarError(const std::string& what, int line, int column);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

// ---------------------------------------------------------------------------
// Grammar

struct GrammarExpr {
  enum class Kind { word, rule_ref, sequence, alternation, optional, zero_or_more, one_or_more };

  Kind kind = Kind::sequence;
  std::string name;  // word or rule_ref
  std::vector<GrammarExpr> children;

  static GrammarExpr word(std::string w) { return {Kind::word, std::move(w), {}}; }
  static GrammarExpr ref(std::string r) { return {Kind::rule_ref, std::move(r), {}}; }

  bool operator==(const GrammarExpr&) const = default;
};

struct GrammarRule {
  std::string name;
  GrammarExpr body;
  bool operator==(const GrammarRule&) const = default;
};

/// Rules in definition order plus the parenthesised start expression.
struct GrammarAst {
  std::vector<GrammarRule> rules;
  GrammarExpr top;

  const GrammarRule* find_rule(std::string_view name) const;
  bool operator==(const GrammarAst&) const = default;
};

/// Parses the HParse-style notation:
///   NAME = expr ;        rules, referenced later by NAME or $NAME
///   ( expr )             start expression, last in the file
/// with `|` alternation, `[ ]` optional, `{ }` zero-or-more and `< >` one-or-more.
/// An identifier naming an earlier rule is a reference; anything else is a word.
GrammarAst parse_grammar(std::string_view text);

/// Text that parse_grammar maps back to an equal AST.
std::string unparse_grammar(const GrammarAst& ast);

/// All terminal words, sorted and unique.
std::vector<std::string> word_list(const GrammarAst& ast);

// ---------------------------------------------------------------------------
// Word network

/// Word-labelled automaton. Node 0 is the start and node 1 the end; both carry empty labels.
struct WordNetwork {
  static constexpr std::size_t kStart = 0;
  static constexpr std::size_t kEnd = 1;

  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> successors;

  std::size_t size() const { return labels.size(); }
  std::size_t word_count() const { return labels.size() - 2; }
  std::size_t add_node(std::string label);
  void add_edge(std::size_t from, std::size_t to);
};

/// Thompson construction over words, epsilon elimination, then trimming of
/// states that are unreachable from the start or cannot reach the end.
WordNetwork compile_network(const GrammarAst& ast);

bool accepts(const WordNetwork& net, const WordSequence& words);

/// Every accepted sequence of at most max_words words.
std::set<WordSequence> enumerate_sentences(const WordNetwork& net, std::size_t max_words);

// ---------------------------------------------------------------------------
// Lexicon

class Lexicon {
 public:
  void add(const std::string& word, Pronunciation phones);

  bool contains(std::string_view word) const;
  const std::vector<Pronunciation>& pronunciations(std::string_view word) const;
  std::vector<std::string> words() const;
  bool empty() const { return entries_.empty(); }

  /// Word pair a contraction word stands for, or the word itself.
  WordSequence expand(std::string_view word) const;
  WordSequence expand(const WordSequence& words) const;
  bool is_contraction(std::string_view word) const;
  const std::map<std::string, WordSequence, std::less<>>& contractions() const {
    return expansions_;
  }

  void set_expansion(const std::string& word, WordSequence expansion);

 private:
  std::map<std::string, std::vector<Pronunciation>, std::less<>> entries_;
  std::map<std::string, WordSequence, std::less<>> expansions_;
};

/// One entry per line: word followed by its phones. `#` starts a comment.
/// Repeated words accumulate pronunciations. A word spelled as the contraction
/// name of two other lexicon words (see contraction_name) gets their expansion.
Lexicon parse_lexicon(std::string_view text);
std::string format_lexicon(const Lexicon& lex);

/// NUM_3 + NUM_4 -> NUM_3_4: the second word's leading tokens shared with the first are dropped.
std::string contraction_name(std::string_view first, std::string_view second);

Lexicon add_contraction(Lexicon lex, const std::string& first, const std::string& second,
                        Pronunciation phones);

/// Sorted union of the phones of every pronunciation.
std::vector<std::string> phone_inventory(const Lexicon& lex);

}  // namespace svasr
