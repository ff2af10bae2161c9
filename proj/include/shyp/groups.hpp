#pragma once

#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "shyp/errors.hpp"
#include "shyp/geometry.hpp"

namespace shyp {

enum class AlphabetKind { Free, FreeAbelian, Cyclic, DirectProductWithSwap, Generic };

inline const char* to_string(AlphabetKind k) {
  switch (k) {
    case AlphabetKind::Free: return "Free";
    case AlphabetKind::FreeAbelian: return "FreeAbelian";
    case AlphabetKind::Cyclic: return "Cyclic";
    case AlphabetKind::DirectProductWithSwap: return "DirectProductWithSwap";
    case AlphabetKind::Generic: return "Generic";
  }
  return "?";
}

using Exponents = std::vector<long>;

/// Element (first, second) . t^swap of (G1 x G2) or (G x G) semidirect Z/2.
struct PairWord {
  Letters first;
  Letters second;
  bool swap = false;
  bool operator==(const PairWord&) const = default;
};

using Word = std::variant<Letters, Exponents, PairWord>;

inline Letters free_reduce(const Letters& w) {
  Letters out;
  out.reserve(w.size());
  for (int l : w) {
    if (l == 0) throw PreconditionError("letter 0");
    if (!out.empty() && out.back() == -l)
      out.pop_back();
    else
      out.push_back(l);
  }
  return out;
}

inline Letters free_inverse(const Letters& w) {
  Letters out(w.rbegin(), w.rend());
  for (int& l : out) l = -l;
  return out;
}

inline Letters free_concat(const Letters& u, const Letters& v) {
  Letters w = u;
  w.insert(w.end(), v.begin(), v.end());
  return free_reduce(w);
}

class Alphabet {
 public:
  Alphabet() = default;

  static Alphabet free(int k) {
    if (k < 1) throw PreconditionError("free rank must be >= 1");
    Alphabet a(AlphabetKind::Free);
    a.rank_ = k;
    return a;
  }
  static Alphabet cyclic() {
    Alphabet a(AlphabetKind::Cyclic);
    a.rank_ = 1;
    return a;
  }
  static Alphabet free_abelian(int n) {
    if (n < 1) throw PreconditionError("abelian rank must be >= 1");
    Alphabet a(AlphabetKind::FreeAbelian);
    a.rank_ = n;
    return a;
  }
  static Alphabet product(const Alphabet& first, const Alphabet& second, bool with_swap) {
    for (const auto* c : {&first, &second})
      if (c->kind_ != AlphabetKind::Free && c->kind_ != AlphabetKind::Cyclic)
        throw PreconditionError("product factors must be free or cyclic presentations");
    if (with_swap && first.rank_ != second.rank_) throw PreconditionError("swap needs identical factors");
    Alphabet a(AlphabetKind::DirectProductWithSwap);
    a.rank_ = first.rank_ + second.rank_;
    a.first_rank_ = first.rank_;
    a.second_rank_ = second.rank_;
    a.swap_ = with_swap;
    return a;
  }
  /// Words in k generators modulo whatever `normal_form` identifies; metric by bounded BFS.
  static Alphabet generic(int k, std::function<Letters(const Letters&)> normal_form, int bfs_cap = 12) {
    if (k < 1) throw PreconditionError("generic rank must be >= 1");
    Alphabet a(AlphabetKind::Generic);
    a.rank_ = k;
    a.normal_form_ = normal_form ? std::move(normal_form) : [](const Letters& w) { return free_reduce(w); };
    a.bfs_cap_ = bfs_cap;
    return a;
  }

  AlphabetKind kind() const { return kind_; }
  int rank() const { return rank_; }
  bool with_swap() const { return swap_; }
  int first_rank() const { return first_rank_; }
  int second_rank() const { return second_rank_; }
  bool is_free() const { return kind_ == AlphabetKind::Free || kind_ == AlphabetKind::Cyclic; }

  int num_symbols() const { return 2 * rank_ + (swap_ ? 1 : 0); }
  int swap_symbol() const { return swap_ ? 2 * rank_ : -1; }

  int inverse_symbol(int s) const {
    check_symbol(s);
    if (s == swap_symbol()) return s;
    return s ^ 1;
  }

  /// Signed letter of a symbol within its factor.
  int symbol_letter(int s) const {
    check_symbol(s);
    int g = s / 2;
    if (kind_ == AlphabetKind::DirectProductWithSwap && g >= first_rank_) g -= first_rank_;
    return (s % 2) ? -(g + 1) : (g + 1);
  }

  int letter_symbol(int letter, int factor = 0) const {
    int g = std::abs(letter) - 1;
    if (factor == 1) g += first_rank_;
    return 2 * g + (letter < 0 ? 1 : 0);
  }

  std::string symbol_name(int s) const {
    check_symbol(s);
    if (s == swap_symbol()) return "t";
    std::string n(1, letter_char(symbol_letter(s)));
    if (kind_ == AlphabetKind::DirectProductWithSwap) n += (s / 2 < first_rank_) ? "1" : "2";
    return n;
  }

  Word identity() const {
    switch (kind_) {
      case AlphabetKind::FreeAbelian: return Exponents(rank_, 0);
      case AlphabetKind::DirectProductWithSwap: return PairWord{};
      default: return Letters{};
    }
  }

  Word symbol(int s) const {
    check_symbol(s);
    switch (kind_) {
      case AlphabetKind::FreeAbelian: {
        Exponents e(rank_, 0);
        e[s / 2] = (s % 2) ? -1 : 1;
        return e;
      }
      case AlphabetKind::DirectProductWithSwap: {
        if (s == swap_symbol()) return PairWord{{}, {}, true};
        if (s / 2 < first_rank_) return PairWord{{symbol_letter(s)}, {}, false};
        return PairWord{{}, {symbol_letter(s)}, false};
      }
      default: return Letters{symbol_letter(s)};
    }
  }

  void check(const Word& w) const {
    switch (kind_) {
      case AlphabetKind::FreeAbelian:
        if (!std::holds_alternative<Exponents>(w) || std::get<Exponents>(w).size() != std::size_t(rank_))
          throw PreconditionError("expected an exponent vector of length " + std::to_string(rank_));
        return;
      case AlphabetKind::DirectProductWithSwap: {
        if (!std::holds_alternative<PairWord>(w)) throw PreconditionError("expected a pair word");
        const auto& p = std::get<PairWord>(w);
        check_letters(p.first, first_rank_);
        check_letters(p.second, second_rank_);
        if (p.swap && !swap_) throw PreconditionError("swap letter without a swap factor");
        return;
      }
      default:
        if (!std::holds_alternative<Letters>(w)) throw PreconditionError("expected letters");
        check_letters(std::get<Letters>(w), rank_);
    }
  }

  Word canonical(const Word& w) const {
    check(w);
    switch (kind_) {
      case AlphabetKind::FreeAbelian: return w;
      case AlphabetKind::DirectProductWithSwap: {
        auto p = std::get<PairWord>(w);
        return PairWord{free_reduce(p.first), free_reduce(p.second), p.swap};
      }
      case AlphabetKind::Generic: return normal_form_(std::get<Letters>(w));
      default: return free_reduce(std::get<Letters>(w));
    }
  }

  Word multiply(const Word& u, const Word& v) const {
    check(u);
    check(v);
    switch (kind_) {
      case AlphabetKind::FreeAbelian: {
        Exponents e = std::get<Exponents>(u);
        const auto& f = std::get<Exponents>(v);
        for (int i = 0; i < rank_; ++i) e[i] += f[i];
        return e;
      }
      case AlphabetKind::DirectProductWithSwap: {
        const auto& a = std::get<PairWord>(u);
        const auto& b = std::get<PairWord>(v);
        // (x,y) t^s . (z,w) t^r = (x,y) . (t^s (z,w) t^-s) . t^(s+r)
        const Letters& z = a.swap ? b.second : b.first;
        const Letters& w = a.swap ? b.first : b.second;
        return PairWord{free_concat(a.first, z), free_concat(a.second, w), a.swap != b.swap};
      }
      case AlphabetKind::Generic: return normal_form_(free_concat(std::get<Letters>(u), std::get<Letters>(v)));
      default: return free_concat(std::get<Letters>(u), std::get<Letters>(v));
    }
  }

  Word inverse(const Word& u) const {
    check(u);
    switch (kind_) {
      case AlphabetKind::FreeAbelian: {
        Exponents e = std::get<Exponents>(u);
        for (auto& x : e) x = -x;
        return e;
      }
      case AlphabetKind::DirectProductWithSwap: {
        const auto& a = std::get<PairWord>(u);
        // ((x,y) t^s)^-1 = t^s (x^-1, y^-1) = (swapped) t^s
        Letters x = free_inverse(a.first), y = free_inverse(a.second);
        if (a.swap) std::swap(x, y);
        return PairWord{x, y, a.swap};
      }
      case AlphabetKind::Generic: return normal_form_(free_inverse(std::get<Letters>(u)));
      default: return free_inverse(free_reduce(std::get<Letters>(u)));
    }
  }

  bool equal(const Word& u, const Word& v) const { return canonical(u) == canonical(v); }

  /// Word length |u^-1 v|_Sigma; nullopt when a Generic search exceeds its cap.
  std::optional<long> word_metric(const Word& u, const Word& v) const {
    Word d = multiply(inverse(u), v);
    switch (kind_) {
      case AlphabetKind::FreeAbelian: {
        long s = 0;
        for (long x : std::get<Exponents>(d)) s += std::labs(x);
        return s;
      }
      case AlphabetKind::DirectProductWithSwap: {
        const auto& p = std::get<PairWord>(d);
        return static_cast<long>(p.first.size() + p.second.size()) + (p.swap ? 1 : 0);
      }
      case AlphabetKind::Generic: return bfs_length(std::get<Letters>(d));
      default: return static_cast<long>(std::get<Letters>(d).size());
    }
  }

  std::optional<long> length(const Word& u) const { return word_metric(identity(), u); }

  /// Symbols s_1..s_m with u = s_1 ... s_m.
  std::vector<int> spell(const Word& u) const {
    Word c = canonical(u);
    std::vector<int> out;
    switch (kind_) {
      case AlphabetKind::FreeAbelian: {
        const auto& e = std::get<Exponents>(c);
        for (int i = 0; i < rank_; ++i)
          for (long j = 0; j < std::labs(e[i]); ++j) out.push_back(2 * i + (e[i] < 0 ? 1 : 0));
        return out;
      }
      case AlphabetKind::DirectProductWithSwap: {
        const auto& p = std::get<PairWord>(c);
        for (int l : p.first) out.push_back(letter_symbol(l, 0));
        for (int l : p.second) out.push_back(letter_symbol(l, 1));
        if (p.swap) out.push_back(swap_symbol());
        return out;
      }
      default:
        for (int l : std::get<Letters>(c)) out.push_back(letter_symbol(l));
        return out;
    }
  }

  std::string to_string(const Word& u) const {
    check(u);
    switch (kind_) {
      case AlphabetKind::FreeAbelian: {
        std::string s = "(";
        const auto& e = std::get<Exponents>(u);
        for (std::size_t i = 0; i < e.size(); ++i) s += (i ? "," : "") + std::to_string(e[i]);
        return s + ")";
      }
      case AlphabetKind::DirectProductWithSwap: {
        const auto& p = std::get<PairWord>(u);
        std::string s = "(";
        for (int l : p.first) s += letter_char(l);
        s += ",";
        for (int l : p.second) s += letter_char(l);
        s += ")";
        if (p.swap) s += "t";
        return s;
      }
      default: {
        std::string s;
        for (int l : std::get<Letters>(u)) s += letter_char(l);
        return s;
      }
    }
  }

  Word parse(const std::string& text) const {
    switch (kind_) {
      case AlphabetKind::FreeAbelian: {
        if (text.size() < 2 || text.front() != '(' || text.back() != ')')
          throw PreconditionError("abelian words look like (2,-1)");
        Exponents e;
        std::stringstream ss(text.substr(1, text.size() - 2));
        std::string item;
        while (std::getline(ss, item, ',')) e.push_back(std::stol(item));
        check(e);
        return e;
      }
      case AlphabetKind::DirectProductWithSwap: {
        auto comma = text.find(',');
        auto close = text.find(')');
        if (text.empty() || text.front() != '(' || comma == std::string::npos || close == std::string::npos)
          throw PreconditionError("pair words look like (ab,Ba)t");
        PairWord p;
        for (std::size_t i = 1; i < comma; ++i) p.first.push_back(char_letter(text[i]));
        for (std::size_t i = comma + 1; i < close; ++i) p.second.push_back(char_letter(text[i]));
        p.swap = close + 1 < text.size() && text[close + 1] == 't';
        return canonical(p);
      }
      default: {
        Letters w;
        for (char c : text) w.push_back(char_letter(c));
        return canonical(w);
      }
    }
  }

  std::string describe() const {
    std::string s = shyp::to_string(kind_);
    s += "(" + std::to_string(rank_);
    if (kind_ == AlphabetKind::DirectProductWithSwap)
      s = std::string("DirectProductWithSwap(") + std::to_string(first_rank_) + "," + std::to_string(second_rank_) +
          (swap_ ? ",swap" : "");
    return s + ")";
  }

 private:
  explicit Alphabet(AlphabetKind k) : kind_(k) {}

  void check_symbol(int s) const {
    if (s < 0 || s >= num_symbols()) throw PreconditionError("symbol index out of range");
  }

  static void check_letters(const Letters& w, int rank) {
    for (int l : w)
      if (l == 0 || std::abs(l) > rank) throw PreconditionError("letter outside the alphabet");
  }

  std::optional<long> bfs_length(const Letters& target) const {
    Letters goal = normal_form_(target);
    std::set<Letters> seen{normal_form_({})};
    std::vector<Letters> frontier{normal_form_({})};
    if (frontier.front() == goal) return 0;
    for (int depth = 1; depth <= bfs_cap_; ++depth) {
      std::vector<Letters> next;
      for (const auto& w : frontier) {
        for (int g = 1; g <= rank_; ++g) {
          for (int l : {g, -g}) {
            Letters e = w;
            e.push_back(l);
            Letters n = normal_form_(free_reduce(e));
            if (n == goal) return depth;
            if (seen.insert(n).second) next.push_back(n);
          }
        }
      }
      frontier = std::move(next);
    }
    return std::nullopt;
  }

  AlphabetKind kind_ = AlphabetKind::Cyclic;
  int rank_ = 1;
  int first_rank_ = 0;
  int second_rank_ = 0;
  bool swap_ = false;
  std::function<Letters(const Letters&)> normal_form_;
  int bfs_cap_ = 12;
};

/// Longest prefix on which all words of the ray's tail agree, truncated to `depth`.
/// The tail is the second half of the ray.
inline Letters boundary_prefix(const Alphabet& alphabet, const std::vector<Word>& ray, std::size_t depth) {
  if (!alphabet.is_free()) throw Unsupported("boundary prefixes need a free or cyclic presentation");
  if (ray.empty()) throw PreconditionError("empty ray");
  std::size_t start = ray.size() / 2;
  Letters common = std::get<Letters>(alphabet.canonical(ray[start]));
  for (std::size_t i = start + 1; i < ray.size(); ++i) {
    const Letters w = std::get<Letters>(alphabet.canonical(ray[i]));
    std::size_t k = 0;
    while (k < common.size() && k < w.size() && common[k] == w[k]) ++k;
    common.resize(k);
  }
  if (common.size() > depth) common.resize(depth);
  return common;
}

struct PrefixResult {
  Letters prefix;
  bool stabilized = true;  // false when the tail stops agreeing before `depth` although its words are longer
};

inline PrefixResult boundary_prefix_checked(const Alphabet& alphabet, const std::vector<Word>& ray, std::size_t depth) {
  PrefixResult r{boundary_prefix(alphabet, ray, depth), true};
  if (r.prefix.size() < depth) {
    std::size_t shortest = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = ray.size() / 2; i < ray.size(); ++i)
      shortest = std::min(shortest, std::get<Letters>(alphabet.canonical(ray[i])).size());
    r.stabilized = shortest <= r.prefix.size();
  }
  return r;
}

}  // namespace shyp
