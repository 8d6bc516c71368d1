#include "svasr/lingua.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <optional>
#include <sstream>
#include <utility>

#include "svasr/util.hpp"

namespace svasr {

GrammarError::GrammarError(const std::string& what, int line, int column)
    : Error("grammar:" + std::to_string(line) + ":" + std::to_string(column) + ": " + what),
      line_(line),
      column_(column) {}

const GrammarRule* GrammarAst::find_rule(std::string_view name) const {
  for (const auto& r : rules)
    if (r.name == name) return &r;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Grammar parser

namespace {

bool is_symbol(char c) {
  return c == '=' || c == ';' || c == '|' || c == '(' || c == ')' || c == '[' || c == ']' ||
         c == '{' || c == '}' || c == '<' || c == '>';
}

struct Token {
  enum class Type { ident, ref, symbol, end } type = Type::end;
  std::string text;
  int line = 1;
  int column = 1;
};

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  int line = 1, column = 1;
  std::size_t i = 0;
  auto advance = [&] {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
    ++i;
  };
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance();
    } else if (c == '#') {
      while (i < text.size() && text[i] != '\n') advance();
    } else if (is_symbol(c)) {
      out.push_back({Token::Type::symbol, std::string(1, c), line, column});
      advance();
    } else {
      Token tok{Token::Type::ident, {}, line, column};
      if (c == '$') {
        tok.type = Token::Type::ref;
        advance();
      }
      while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) &&
             !is_symbol(text[i]) && text[i] != '$' && text[i] != '#') {
        tok.text += text[i];
        advance();
      }
      if (tok.text.empty()) throw GrammarError("'$' must be followed by a rule name", tok.line, tok.column);
      out.push_back(std::move(tok));
    }
  }
  out.push_back({Token::Type::end, {}, line, column});
  return out;
}

GrammarExpr simplify(GrammarExpr e) {
  using K = GrammarExpr::Kind;
  if ((e.kind == K::sequence || e.kind == K::alternation) && e.children.size() == 1)
    return std::move(e.children.front());
  return e;
}

class GrammarParser {
 public:
  explicit GrammarParser(std::string_view text) : tokens_(tokenize(text)) {}

  GrammarAst parse() {
    GrammarAst ast;
    while (peek().type == Token::Type::ident && peek(1).type == Token::Type::symbol &&
           peek(1).text == "=") {
      Token name = next();
      next();
      if (ast.find_rule(name.text))
        throw GrammarError("rule '" + name.text + "' defined twice", name.line, name.column);
      GrammarExpr body = parse_alternation(ast);
      expect(";");
      ast.rules.push_back({name.text, std::move(body)});
    }
    expect("(");
    ast.top = parse_alternation(ast);
    expect(")");
    if (peek().type != Token::Type::end)
      throw GrammarError("unexpected '" + peek().text + "' after start expression", peek().line,
                         peek().column);
    return ast;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)];
  }
  Token next() { return tokens_[std::min(pos_++, tokens_.size() - 1)]; }

  void expect(const char* symbol) {
    const Token& t = peek();
    if (t.type != Token::Type::symbol || t.text != symbol) {
      std::string found = t.type == Token::Type::end ? "end of input" : "'" + t.text + "'";
      throw GrammarError(std::string("expected '") + symbol + "' but found " + found, t.line,
                         t.column);
    }
    ++pos_;
  }

  GrammarExpr parse_alternation(const GrammarAst& ast) {
    GrammarExpr alt{GrammarExpr::Kind::alternation, {}, {}};
    alt.children.push_back(parse_sequence(ast));
    while (peek().type == Token::Type::symbol && peek().text == "|") {
      ++pos_;
      alt.children.push_back(parse_sequence(ast));
    }
    return simplify(std::move(alt));
  }

  GrammarExpr parse_sequence(const GrammarAst& ast) {
    GrammarExpr seq{GrammarExpr::Kind::sequence, {}, {}};
    while (auto f = parse_factor(ast)) seq.children.push_back(std::move(*f));
    if (seq.children.empty()) {
      const Token& t = peek();
      throw GrammarError("empty expression", t.line, t.column);
    }
    return simplify(std::move(seq));
  }

  std::optional<GrammarExpr> parse_factor(const GrammarAst& ast) {
    const Token& t = peek();
    using K = GrammarExpr::Kind;
    switch (t.type) {
      case Token::Type::ident: {
        Token tok = next();
        if (ast.find_rule(tok.text)) return GrammarExpr::ref(tok.text);
        return GrammarExpr::word(tok.text);
      }
      case Token::Type::ref: {
        Token tok = next();
        if (!ast.find_rule(tok.text))
          throw GrammarError("reference to undefined rule '$" + tok.text + "'", tok.line, tok.column);
        return GrammarExpr::ref(tok.text);
      }
      case Token::Type::symbol: {
        struct Bracket {
          const char* open;
          const char* close;
          std::optional<K> kind;
        };
        static constexpr Bracket brackets[] = {{"(", ")", std::nullopt},
                                               {"[", "]", K::optional},
                                               {"{", "}", K::zero_or_more},
                                               {"<", ">", K::one_or_more}};
        for (const auto& b : brackets) {
          if (t.text != b.open) continue;
          ++pos_;
          GrammarExpr inner = parse_alternation(ast);
          expect(b.close);
          if (!b.kind) return inner;
          return GrammarExpr{*b.kind, {}, {std::move(inner)}};
        }
        return std::nullopt;
      }
      case Token::Type::end:
        return std::nullopt;
    }
    return std::nullopt;
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

void unparse_expr(const GrammarExpr& e, std::ostringstream& out, bool grouped) {
  using K = GrammarExpr::Kind;
  auto children = [&](const char* sep, bool seq) {
    for (std::size_t i = 0; i < e.children.size(); ++i) {
      if (i) out << sep;
      unparse_expr(e.children[i], out, seq || (e.kind == K::alternation && e.children[i].kind == K::alternation));
    }
  };
  switch (e.kind) {
    case K::word: out << e.name; break;
    case K::rule_ref: out << '$' << e.name; break;
    case K::sequence:
      if (grouped) out << "( ";
      children(" ", true);
      if (grouped) out << " )";
      break;
    case K::alternation:
      if (grouped) out << "( ";
      children(" | ", false);
      if (grouped) out << " )";
      break;
    case K::optional: out << "[ "; children("", false); out << " ]"; break;
    case K::zero_or_more: out << "{ "; children("", false); out << " }"; break;
    case K::one_or_more: out << "< "; children("", false); out << " >"; break;
  }
}

void collect_words(const GrammarExpr& e, std::set<std::string>& out) {
  if (e.kind == GrammarExpr::Kind::word) out.insert(e.name);
  for (const auto& c : e.children) collect_words(c, out);
}

}  // namespace

GrammarAst parse_grammar(std::string_view text) { return GrammarParser(text).parse(); }

std::string unparse_grammar(const GrammarAst& ast) {
  std::ostringstream out;
  for (const auto& r : ast.rules) {
    out << r.name << " = ";
    unparse_expr(r.body, out, false);
    out << " ;\n";
  }
  out << "( ";
  unparse_expr(ast.top, out, false);
  out << " )\n";
  return out.str();
}

std::vector<std::string> word_list(const GrammarAst& ast) {
  std::set<std::string> words;
  for (const auto& r : ast.rules) collect_words(r.body, words);
  collect_words(ast.top, words);
  return {words.begin(), words.end()};
}

// ---------------------------------------------------------------------------
// Word network

std::size_t WordNetwork::add_node(std::string label) {
  labels.push_back(std::move(label));
  successors.emplace_back();
  return labels.size() - 1;
}

void WordNetwork::add_edge(std::size_t from, std::size_t to) {
  auto& succ = successors.at(from);
  if (std::find(succ.begin(), succ.end(), to) == succ.end()) succ.push_back(to);
}

namespace {

struct Nfa {
  struct WordArc {
    std::size_t from, to;
    std::string word;
  };
  std::vector<std::vector<std::size_t>> eps;
  std::vector<WordArc> arcs;

  std::size_t add_state() {
    eps.emplace_back();
    return eps.size() - 1;
  }
  void link(std::size_t a, std::size_t b) { eps[a].push_back(b); }

  std::pair<std::size_t, std::size_t> build(const GrammarExpr& e, const GrammarAst& ast) {
    using K = GrammarExpr::Kind;
    switch (e.kind) {
      case K::word: {
        auto in = add_state(), out = add_state();
        arcs.push_back({in, out, e.name});
        return {in, out};
      }
      case K::rule_ref:
        return build(ast.find_rule(e.name)->body, ast);
      case K::sequence: {
        auto [in, out] = build(e.children.front(), ast);
        for (std::size_t i = 1; i < e.children.size(); ++i) {
          auto [a, b] = build(e.children[i], ast);
          link(out, a);
          out = b;
        }
        return {in, out};
      }
      case K::alternation: {
        auto in = add_state(), out = add_state();
        for (const auto& c : e.children) {
          auto [a, b] = build(c, ast);
          link(in, a);
          link(b, out);
        }
        return {in, out};
      }
      case K::optional:
      case K::zero_or_more:
      case K::one_or_more: {
        auto in = add_state(), out = add_state();
        auto [a, b] = build(e.children.front(), ast);
        link(in, a);
        link(b, out);
        if (e.kind != K::optional) link(b, a);
        if (e.kind != K::one_or_more) link(in, out);
        return {in, out};
      }
    }
    return {0, 0};
  }

  std::vector<bool> closure(std::size_t s) const {
    std::vector<bool> seen(eps.size(), false);
    std::vector<std::size_t> stack{s};
    seen[s] = true;
    while (!stack.empty()) {
      auto u = stack.back();
      stack.pop_back();
      for (auto v : eps[u])
        if (!seen[v]) seen[v] = true, stack.push_back(v);
    }
    return seen;
  }
};

std::vector<bool> reachable(const std::vector<std::vector<std::size_t>>& adj, std::size_t from) {
  std::vector<bool> seen(adj.size(), false);
  std::vector<std::size_t> stack{from};
  seen[from] = true;
  while (!stack.empty()) {
    auto u = stack.back();
    stack.pop_back();
    for (auto v : adj[u])
      if (!seen[v]) seen[v] = true, stack.push_back(v);
  }
  return seen;
}

}  // namespace

WordNetwork compile_network(const GrammarAst& ast) {
  Nfa nfa;
  auto [nfa_start, nfa_final] = nfa.build(ast.top, ast);

  // One word node per word arc; node ids offset by the start/end pair.
  WordNetwork raw;
  raw.add_node("");
  raw.add_node("");
  for (const auto& a : nfa.arcs) raw.add_node(a.word);

  auto connect_from = [&](std::size_t node, std::size_t nfa_state) {
    const auto reach = nfa.closure(nfa_state);
    for (std::size_t k = 0; k < nfa.arcs.size(); ++k)
      if (reach[nfa.arcs[k].from]) raw.add_edge(node, k + 2);
    if (reach[nfa_final]) raw.add_edge(node, WordNetwork::kEnd);
  };
  connect_from(WordNetwork::kStart, nfa_start);
  for (std::size_t k = 0; k < nfa.arcs.size(); ++k) connect_from(k + 2, nfa.arcs[k].to);

  std::vector<std::vector<std::size_t>> reverse(raw.size());
  for (std::size_t u = 0; u < raw.size(); ++u)
    for (auto v : raw.successors[u]) reverse[v].push_back(u);
  const auto fwd = reachable(raw.successors, WordNetwork::kStart);
  const auto bwd = reachable(reverse, WordNetwork::kEnd);

  WordNetwork net;
  net.add_node("");
  net.add_node("");
  std::vector<std::size_t> remap(raw.size(), SIZE_MAX);
  remap[WordNetwork::kStart] = WordNetwork::kStart;
  remap[WordNetwork::kEnd] = WordNetwork::kEnd;
  for (std::size_t u = 2; u < raw.size(); ++u)
    if (fwd[u] && bwd[u]) remap[u] = net.add_node(raw.labels[u]);
  for (std::size_t u = 0; u < raw.size(); ++u) {
    if (remap[u] == SIZE_MAX) continue;
    for (auto v : raw.successors[u])
      if (remap[v] != SIZE_MAX) net.add_edge(remap[u], remap[v]);
  }
  return net;
}

bool accepts(const WordNetwork& net, const WordSequence& words) {
  std::set<std::size_t> current{WordNetwork::kStart};
  for (const auto& w : words) {
    std::set<std::size_t> next;
    for (auto u : current)
      for (auto v : net.successors[u])
        if (v != WordNetwork::kEnd && net.labels[v] == w) next.insert(v);
    if (next.empty()) return false;
    current = std::move(next);
  }
  for (auto u : current)
    for (auto v : net.successors[u])
      if (v == WordNetwork::kEnd) return true;
  return false;
}

std::set<WordSequence> enumerate_sentences(const WordNetwork& net, std::size_t max_words) {
  std::set<WordSequence> out;
  std::map<WordSequence, std::set<std::size_t>> frontier{{{}, {WordNetwork::kStart}}};
  for (std::size_t len = 0; !frontier.empty(); ++len) {
    std::map<WordSequence, std::set<std::size_t>> next;
    for (const auto& [seq, nodes] : frontier) {
      for (auto u : nodes) {
        for (auto v : net.successors[u]) {
          if (v == WordNetwork::kEnd) {
            out.insert(seq);
          } else if (len < max_words) {
            auto extended = seq;
            extended.push_back(net.labels[v]);
            next[std::move(extended)].insert(v);
          }
        }
      }
    }
    frontier = std::move(next);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lexicon

void Lexicon::add(const std::string& word, Pronunciation phones) {
  if (word.empty() || phones.empty()) throw DomainError("lexicon entry needs a word and phones");
  auto& prons = entries_[word];
  if (std::find(prons.begin(), prons.end(), phones) == prons.end()) prons.push_back(std::move(phones));
}

bool Lexicon::contains(std::string_view word) const { return entries_.find(word) != entries_.end(); }

const std::vector<Pronunciation>& Lexicon::pronunciations(std::string_view word) const {
  auto it = entries_.find(word);
  if (it == entries_.end()) throw DomainError("word '" + std::string(word) + "' not in lexicon");
  return it->second;
}

std::vector<std::string> Lexicon::words() const {
  std::vector<std::string> out;
  for (const auto& [w, _] : entries_) out.push_back(w);
  return out;
}

WordSequence Lexicon::expand(std::string_view word) const {
  auto it = expansions_.find(word);
  if (it == expansions_.end()) return {std::string(word)};
  return it->second;
}

WordSequence Lexicon::expand(const WordSequence& words) const {
  WordSequence out;
  for (const auto& w : words) {
    auto e = expand(w);
    out.insert(out.end(), e.begin(), e.end());
  }
  return out;
}

bool Lexicon::is_contraction(std::string_view word) const {
  return expansions_.find(word) != expansions_.end();
}

void Lexicon::set_expansion(const std::string& word, WordSequence expansion) {
  if (!contains(word)) throw DomainError("word '" + word + "' not in lexicon");
  for (const auto& w : expansion)
    if (!contains(w) || is_contraction(w))
      throw DomainError("expansion target '" + w + "' must be a plain lexicon word");
  expansions_[word] = std::move(expansion);
}

namespace {

std::vector<std::string> split_underscore(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find('_', start);
    out.emplace_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::string contraction_name(std::string_view first, std::string_view second) {
  const auto a = split_underscore(first);
  const auto b = split_underscore(second);
  std::size_t shared = 0;
  while (shared + 1 < b.size() && shared < a.size() && a[shared] == b[shared]) ++shared;
  std::string name(first);
  for (std::size_t i = shared; i < b.size(); ++i) name += "_" + b[i];
  return name;
}

Lexicon parse_lexicon(std::string_view text) {
  Lexicon lex;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto tokens = split_whitespace(line);
    if (tokens.empty()) continue;
    if (tokens.size() < 2)
      throw FormatError("lexicon:" + std::to_string(line_no) + ": entry '" + tokens[0] +
                        "' has no phones");
    lex.add(tokens[0], Pronunciation(tokens.begin() + 1, tokens.end()));
  }

  const auto words = lex.words();
  for (const auto& w : words) {
    for (std::size_t pos = w.find('_'); pos != std::string::npos; pos = w.find('_', pos + 1)) {
      const std::string first = w.substr(0, pos);
      if (!lex.contains(first)) continue;
      for (const auto& second : words) {
        if (second != w && contraction_name(first, second) == w) {
          lex.set_expansion(w, {first, second});
          break;
        }
      }
      if (lex.is_contraction(w)) break;
    }
  }
  return lex;
}

std::string format_lexicon(const Lexicon& lex) {
  std::ostringstream out;
  for (const auto& w : lex.words()) {
    for (const auto& p : lex.pronunciations(w)) {
      out << w;
      for (const auto& ph : p) out << ' ' << ph;
      out << '\n';
    }
  }
  return out.str();
}

Lexicon add_contraction(Lexicon lex, const std::string& first, const std::string& second,
                        Pronunciation phones) {
  for (const auto* w : {&first, &second})
    if (!lex.contains(*w)) throw DomainError("contraction part '" + *w + "' not in lexicon");
  const std::string name = contraction_name(first, second);
  lex.add(name, std::move(phones));
  if (!lex.is_contraction(name)) lex.set_expansion(name, {first, second});
  return lex;
}

std::vector<std::string> phone_inventory(const Lexicon& lex) {
  std::set<std::string> phones;
  for (const auto& w : lex.words())
    for (const auto& p : lex.pronunciations(w)) phones.insert(p.begin(), p.end());
  return {phones.begin(), phones.end()};
}

}  // namespace svasr
