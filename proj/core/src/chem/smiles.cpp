#include "grapht5/chem/smiles.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <utility>

namespace grapht5::chem {

namespace {

constexpr std::array<std::string_view, 119> kElements = {
    "*",  "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si",
    "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu",
    "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru",
    "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr",
    "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",
    "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac",
    "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf",
    "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

constexpr int kMaxDegreeFeature = 10;

bool is_organic_start(char c) {
  switch (c) {
    case 'B': case 'C': case 'N': case 'O': case 'P': case 'S': case 'F': case 'I':
    case 'b': case 'c': case 'n': case 'o': case 'p': case 's': case '*':
      return true;
    default:
      return false;
  }
}

bool is_bond_char(char c) {
  switch (c) {
    case '-': case '=': case '#': case '$': case ':': case '/': case '\\': case '.':
      return true;
    default:
      return false;
  }
}

struct ParsedAtom {
  std::string element;
  int atomic_number = 0;
  int charge = 0;
  bool aromatic = false;
};

std::string capitalise(std::string_view s) {
  std::string out(s);
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

ParsedAtom organic_atom(const SmilesToken &tok) {
  ParsedAtom atom;
  if (tok.text == "*") {
    atom.element = "*";
    return atom;
  }
  atom.aromatic = std::islower(static_cast<unsigned char>(tok.text[0])) != 0;
  atom.element = capitalise(tok.text);
  atom.atomic_number = atomic_number(atom.element);
  return atom;
}

// [isotope? symbol chiral? hcount? charge? class?]
ParsedAtom bracket_atom(const SmilesToken &tok) {
  const std::string_view body(tok.text.data() + 1, tok.text.size() - 2);
  const std::size_t base = tok.position + 1;
  std::size_t i = 0;
  auto at = [&](std::size_t k) { return k < body.size() ? body[k] : '\0'; };

  while (std::isdigit(static_cast<unsigned char>(at(i)))) ++i;

  ParsedAtom atom;
  const char c = at(i);
  if (c == '*') {
    atom.element = "*";
    ++i;
  } else if (std::isupper(static_cast<unsigned char>(c))) {
    const char next = at(i + 1);
    if (std::islower(static_cast<unsigned char>(next)) &&
        atomic_number(std::string{c, next}) >= 0) {
      atom.element = std::string{c, next};
      i += 2;
    } else if (std::islower(static_cast<unsigned char>(next)) && atomic_number(std::string{c}) < 0) {
      throw UnsupportedElementError(std::string{c, next}, base + i);
    } else {
      atom.element = std::string{c};
      if (atomic_number(atom.element) < 0) throw UnsupportedElementError(atom.element, base + i);
      ++i;
    }
  } else if (std::islower(static_cast<unsigned char>(c))) {
    const std::string two{c, at(i + 1)};
    if (two == "se" || two == "as") {
      atom.element = capitalise(two);
      i += 2;
    } else if (std::string_view("bcnops").find(c) != std::string_view::npos) {
      atom.element = capitalise(std::string{c});
      ++i;
    } else {
      throw UnsupportedElementError(std::string{c}, base + i);
    }
    atom.aromatic = true;
  } else {
    throw ParseError("bracket atom without an element symbol", base + i);
  }
  atom.atomic_number = atomic_number(atom.element);

  if (at(i) == '@') {
    while (at(i) == '@') ++i;
    while (std::isupper(static_cast<unsigned char>(at(i))) && at(i) != 'H') ++i;
    while (std::isdigit(static_cast<unsigned char>(at(i)))) ++i;
  }
  if (at(i) == 'H') {
    ++i;
    while (std::isdigit(static_cast<unsigned char>(at(i)))) ++i;
  }
  if (at(i) == '+' || at(i) == '-') {
    const char sign = at(i);
    const int unit = sign == '+' ? 1 : -1;
    ++i;
    if (std::isdigit(static_cast<unsigned char>(at(i)))) {
      int magnitude = 0;
      while (std::isdigit(static_cast<unsigned char>(at(i)))) magnitude = magnitude * 10 + (at(i++) - '0');
      atom.charge = unit * magnitude;
    } else {
      int repeats = 1;
      while (at(i) == sign) {
        ++repeats;
        ++i;
      }
      atom.charge = unit * repeats;
    }
  }
  if (at(i) == ':') {
    ++i;
    if (!std::isdigit(static_cast<unsigned char>(at(i)))) throw ParseError("atom class without digits", base + i);
    while (std::isdigit(static_cast<unsigned char>(at(i)))) ++i;
  }
  if (i != body.size()) throw ParseError("unexpected character in bracket atom", base + i);
  return atom;
}

std::optional<BondOrder> bond_order_of(const SmilesToken &tok) {
  switch (tok.text[0]) {
    case '-': case '/': case '\\': return BondOrder::kSingle;
    case '=': return BondOrder::kDouble;
    case '#': return BondOrder::kTriple;
    case ':': return BondOrder::kAromatic;
    case '$': throw ParseError("quadruple bonds are not supported", tok.position);
    default: return std::nullopt;
  }
}

class GraphBuilder {
 public:
  std::size_t add_atom(const ParsedAtom &parsed) {
    Atom atom;
    atom.element = parsed.element;
    atom.atomic_number = parsed.atomic_number;
    atom.formal_charge = parsed.charge;
    atom.is_aromatic = parsed.aromatic;
    atom.index = graph_.atoms.size();
    graph_.atoms.push_back(std::move(atom));
    return graph_.atoms.size() - 1;
  }

  void add_bond(std::size_t a, std::size_t b, std::optional<BondOrder> order, std::size_t offset) {
    if (a == b) throw ParseError("bond from an atom to itself", offset);
    const auto key = std::minmax(a, b);
    if (!pairs_.insert(key).second) throw ParseError("duplicate bond between the same atoms", offset);
    const bool both_aromatic = graph_.atoms[a].is_aromatic && graph_.atoms[b].is_aromatic;
    Bond bond;
    bond.begin = a;
    bond.end = b;
    bond.order = order.value_or(both_aromatic ? BondOrder::kAromatic : BondOrder::kSingle);
    graph_.bonds.push_back(bond);
  }

  MolGraph finish() {
    refresh_features(graph_);
    return std::move(graph_);
  }

 private:
  MolGraph graph_;
  std::set<std::pair<std::size_t, std::size_t>> pairs_;
};

struct RingOpening {
  std::size_t atom;
  std::optional<BondOrder> order;
  std::size_t offset;
};

struct PendingBond {
  bool active = false;
  std::optional<BondOrder> order;  // nullopt for the '.' separator
  std::size_t offset = 0;
  bool is_dot = false;
};

}  // namespace

std::string_view token_kind_name(TokenKind kind) {
  switch (kind) {
    case TokenKind::kAtom: return "atom";
    case TokenKind::kBracketAtom: return "bracket_atom";
    case TokenKind::kBond: return "bond";
    case TokenKind::kBranchOpen: return "branch_open";
    case TokenKind::kBranchClose: return "branch_close";
    case TokenKind::kRingDigit: return "ring_digit";
    case TokenKind::kRingTwoDigit: return "ring_two_digit";
  }
  return "unknown";
}

std::string_view bond_order_name(BondOrder order) {
  switch (order) {
    case BondOrder::kSingle: return "single";
    case BondOrder::kDouble: return "double";
    case BondOrder::kTriple: return "triple";
    case BondOrder::kAromatic: return "aromatic";
  }
  return "unknown";
}

int atomic_number(std::string_view symbol) {
  const auto it = std::find(kElements.begin(), kElements.end(), symbol);
  return it == kElements.end() ? -1 : static_cast<int>(it - kElements.begin());
}

std::vector<SmilesToken> tokenize_smiles(std::string_view s) {
  if (s.empty()) throw LexError("empty SMILES string", 0);
  std::vector<SmilesToken> tokens;
  std::size_t i = 0;
  auto emit = [&](TokenKind kind, std::size_t len) {
    tokens.push_back(SmilesToken{kind, std::string(s.substr(i, len)), i});
    i += len;
  };
  while (i < s.size()) {
    const char c = s[i];
    if (c == '[') {
      const auto close = s.find(']', i + 1);
      if (close == std::string_view::npos) throw LexError("unterminated bracket atom", i);
      emit(TokenKind::kBracketAtom, close - i + 1);
    } else if ((c == 'C' && i + 1 < s.size() && s[i + 1] == 'l') ||
               (c == 'B' && i + 1 < s.size() && s[i + 1] == 'r')) {
      emit(TokenKind::kAtom, 2);
    } else if (is_organic_start(c)) {
      emit(TokenKind::kAtom, 1);
    } else if (is_bond_char(c)) {
      emit(TokenKind::kBond, 1);
    } else if (c == '(') {
      emit(TokenKind::kBranchOpen, 1);
    } else if (c == ')') {
      emit(TokenKind::kBranchClose, 1);
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      emit(TokenKind::kRingDigit, 1);
    } else if (c == '%') {
      if (i + 2 >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i + 1])) ||
          !std::isdigit(static_cast<unsigned char>(s[i + 2]))) {
        throw LexError("'%' must be followed by two digits", i);
      }
      emit(TokenKind::kRingTwoDigit, 3);
    } else {
      throw LexError(std::string("unexpected character '") + c + "'", i);
    }
  }
  return tokens;
}

MolGraph parse_smiles(const std::vector<SmilesToken> &tokens) {
  if (tokens.empty()) throw ParseError("empty token list", 0);
  GraphBuilder builder;
  std::optional<std::size_t> prev;
  PendingBond pending;
  struct Branch {
    std::size_t atom;
    std::size_t offset;
    bool has_atom;
  };
  std::vector<Branch> branches;
  std::map<int, RingOpening> rings;

  for (const auto &tok : tokens) {
    switch (tok.kind) {
      case TokenKind::kAtom:
      case TokenKind::kBracketAtom: {
        const auto parsed = tok.kind == TokenKind::kAtom ? organic_atom(tok) : bracket_atom(tok);
        const auto idx = builder.add_atom(parsed);
        if (prev && !(pending.active && pending.is_dot)) {
          builder.add_bond(*prev, idx, pending.active ? pending.order : std::nullopt, tok.position);
        }
        if (!branches.empty()) branches.back().has_atom = true;
        prev = idx;
        pending = PendingBond{};
        break;
      }
      case TokenKind::kBond: {
        if (pending.active) throw ParseError("two consecutive bond symbols", tok.position);
        if (!prev) throw ParseError("bond symbol without a preceding atom", tok.position);
        if (tok.text == ".") {
          if (!branches.empty()) throw ParseError("fragment separator inside a branch", tok.position);
          pending = PendingBond{true, std::nullopt, tok.position, true};
        } else {
          pending = PendingBond{true, bond_order_of(tok), tok.position, false};
        }
        break;
      }
      case TokenKind::kBranchOpen:
        if (!prev) throw ParseError("branch without a preceding atom", tok.position);
        if (pending.active) throw ParseError("bond symbol without a following atom", pending.offset);
        branches.push_back(Branch{*prev, tok.position, false});
        break;
      case TokenKind::kBranchClose:
        if (branches.empty()) throw ParseError("unmatched ')'", tok.position);
        if (pending.active) throw ParseError("bond symbol without a following atom", pending.offset);
        if (!branches.back().has_atom) throw ParseError("empty branch", tok.position);
        prev = branches.back().atom;
        branches.pop_back();
        break;
      case TokenKind::kRingDigit:
      case TokenKind::kRingTwoDigit: {
        if (!prev) throw ParseError("ring closure without a preceding atom", tok.position);
        if (pending.active && pending.is_dot) throw ParseError("ring closure after '.'", tok.position);
        const int label = std::stoi(tok.kind == TokenKind::kRingDigit ? tok.text : tok.text.substr(1));
        const std::optional<BondOrder> order = pending.active ? pending.order : std::nullopt;
        if (auto it = rings.find(label); it != rings.end()) {
          const auto &open = it->second;
          if (open.order && order && *open.order != *order) {
            throw ParseError("conflicting bond orders on ring closure " + tok.text, tok.position);
          }
          builder.add_bond(open.atom, *prev, order ? order : open.order, tok.position);
          rings.erase(it);
        } else {
          rings.emplace(label, RingOpening{*prev, order, tok.position});
        }
        pending = PendingBond{};
        break;
      }
    }
  }
  if (pending.active) throw ParseError("bond symbol without a following atom", pending.offset);
  if (!branches.empty()) throw ParseError("unmatched '('", branches.back().offset);
  if (!rings.empty()) {
    const auto &first = *std::min_element(rings.begin(), rings.end(), [](const auto &a, const auto &b) {
      return a.second.offset < b.second.offset;
    });
    throw ParseError("unclosed ring label " + std::to_string(first.first), first.second.offset);
  }
  return builder.finish();
}

MolGraph smiles_to_graph(std::string_view smiles) { return parse_smiles(tokenize_smiles(smiles)); }

std::vector<std::vector<Neighbor>> MolGraph::adjacency() const {
  std::vector<std::vector<Neighbor>> adj(atoms.size());
  for (std::size_t b = 0; b < bonds.size(); ++b) {
    adj[bonds[b].begin].push_back(Neighbor{bonds[b].end, b});
    adj[bonds[b].end].push_back(Neighbor{bonds[b].begin, b});
  }
  return adj;
}

void refresh_features(MolGraph &graph) {
  for (auto &a : graph.atoms) a.degree = 0;
  for (const auto &b : graph.bonds) {
    ++graph.atoms[b.begin].degree;
    ++graph.atoms[b.end].degree;
  }
  graph.atom_features.clear();
  for (const auto &a : graph.atoms) {
    graph.atom_features.push_back(AtomFeatures{a.atomic_number, std::min(a.degree, kMaxDegreeFeature),
                                               std::clamp(a.formal_charge, -2, 2) + 2,
                                               a.is_aromatic ? 1 : 0});
  }
  graph.bond_features.clear();
  for (const auto &b : graph.bonds) graph.bond_features.push_back(BondFeatures{static_cast<std::int32_t>(b.order)});
}

MolGraph relabel_atoms(const MolGraph &graph, const std::vector<std::size_t> &permutation) {
  const auto n = graph.atoms.size();
  if (permutation.size() != n) throw ContractError("permutation length does not match atom count");
  std::vector<bool> seen(n, false);
  for (const auto p : permutation) {
    if (p >= n || seen[p]) throw ContractError("relabel_atoms needs a permutation of 0..N-1");
    seen[p] = true;
  }
  MolGraph out;
  out.atoms.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.atoms[permutation[i]] = graph.atoms[i];
    out.atoms[permutation[i]].index = permutation[i];
  }
  for (const auto &b : graph.bonds) out.bonds.push_back(Bond{permutation[b.begin], permutation[b.end], b.order});
  refresh_features(out);
  return out;
}

std::string dump_graph(const MolGraph &graph) {
  std::ostringstream os;
  for (const auto &a : graph.atoms) {
    os << "atom " << a.index << ' ' << a.element << ' ' << a.formal_charge << ' ' << (a.is_aromatic ? 1 : 0)
       << '\n';
  }
  for (const auto &b : graph.bonds) os << "bond " << b.begin << ' ' << b.end << ' ' << bond_order_name(b.order) << '\n';
  return os.str();
}

}  // namespace grapht5::chem
