#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <functional>

#include "invx/error.hpp"
#include "invx/pdf.hpp"

namespace invx::pdf {
namespace {

bool is_ws(char c) { return c == ' ' || c == '\n' || c == '\r' || c == '\t' || c == '\f' || c == '\0'; }
bool is_delim(char c) {
  return c == '(' || c == ')' || c == '<' || c == '>' || c == '[' || c == ']' || c == '{' || c == '}' ||
         c == '/' || c == '%';
}
bool is_regular(char c) { return !is_ws(c) && !is_delim(c); }

[[noreturn]] void corrupt(const std::string& why) { throw Error(ErrorCode::CorruptPdf, why); }

void skip_ws(std::string_view t, std::size_t& pos) {
  while (pos < t.size()) {
    if (is_ws(t[pos])) {
      ++pos;
    } else if (t[pos] == '%') {
      while (pos < t.size() && t[pos] != '\n' && t[pos] != '\r') ++pos;
    } else {
      break;
    }
  }
}

ObjectPtr make(auto&& v) {
  auto o = std::make_shared<Object>();
  o->value = std::forward<decltype(v)>(v);
  return o;
}

int hexval(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string parse_literal_string(std::string_view t, std::size_t& pos) {
  ++pos;  // (
  std::string out;
  int depth = 1;
  while (pos < t.size()) {
    char c = t[pos++];
    if (c == '\\') {
      if (pos >= t.size()) break;
      char e = t[pos++];
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 'r': out.push_back('\r'); break;
        case 't': out.push_back('\t'); break;
        case 'b': out.push_back('\b'); break;
        case 'f': out.push_back('\f'); break;
        case '\r':
          if (pos < t.size() && t[pos] == '\n') ++pos;
          break;
        case '\n': break;
        default:
          if (e >= '0' && e <= '7') {
            int v = e - '0';
            for (int k = 0; k < 2 && pos < t.size() && t[pos] >= '0' && t[pos] <= '7'; ++k)
              v = v * 8 + (t[pos++] - '0');
            out.push_back(static_cast<char>(v & 0xFF));
          } else {
            out.push_back(e);
          }
      }
    } else if (c == '(') {
      ++depth;
      out.push_back(c);
    } else if (c == ')') {
      if (--depth == 0) return out;
      out.push_back(c);
    } else {
      out.push_back(c);
    }
  }
  corrupt("unterminated string");
}

std::string parse_hex_string(std::string_view t, std::size_t& pos) {
  ++pos;  // <
  std::string out;
  int pending = -1;
  while (pos < t.size() && t[pos] != '>') {
    char c = t[pos++];
    if (is_ws(c)) continue;
    int v = hexval(c);
    if (v < 0) corrupt("bad hex string");
    if (pending < 0) {
      pending = v;
    } else {
      out.push_back(static_cast<char>(pending * 16 + v));
      pending = -1;
    }
  }
  if (pos >= t.size()) corrupt("unterminated hex string");
  ++pos;
  if (pending >= 0) out.push_back(static_cast<char>(pending * 16));
  return out;
}

std::string parse_name(std::string_view t, std::size_t& pos) {
  ++pos;  // /
  std::string out;
  while (pos < t.size() && is_regular(t[pos])) {
    if (t[pos] == '#' && pos + 2 < t.size() && hexval(t[pos + 1]) >= 0 && hexval(t[pos + 2]) >= 0) {
      out.push_back(static_cast<char>(hexval(t[pos + 1]) * 16 + hexval(t[pos + 2])));
      pos += 3;
    } else {
      out.push_back(t[pos++]);
    }
  }
  return out;
}

bool parse_uint_at(std::string_view t, std::size_t& pos, long& out) {
  std::size_t p = pos;
  if (p >= t.size() || t[p] < '0' || t[p] > '9') return false;
  long v = 0;
  while (p < t.size() && t[p] >= '0' && t[p] <= '9') {
    v = v * 10 + (t[p] - '0');
    if (v > 100'000'000) return false;
    ++p;
  }
  pos = p;
  out = v;
  return true;
}

std::string inflate_all(std::string_view in) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) corrupt("zlib init failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
  zs.avail_in = static_cast<uInt>(in.size());
  std::string out;
  std::array<char, 16384> buf{};
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(buf.data());
    zs.avail_out = static_cast<uInt>(buf.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      // Tolerate trailing garbage after a complete stream but not a broken one.
      inflateEnd(&zs);
      if (rc == Z_BUF_ERROR && zs.avail_in == 0) break;
      corrupt("FlateDecode stream is damaged");
    }
    out.append(buf.data(), buf.size() - zs.avail_out);
    if (out.size() > (512u << 20)) {
      inflateEnd(&zs);
      corrupt("decoded stream too large");
    }
  }
  inflateEnd(&zs);
  return out;
}

struct Matrix {
  double a = 1, b = 0, c = 0, d = 1, e = 0, f = 0;

  // this × o  (apply this first, then o)
  Matrix then(const Matrix& o) const {
    return Matrix{a * o.a + b * o.c,       a * o.b + b * o.d,       c * o.a + d * o.c,
                  c * o.b + d * o.d,       e * o.a + f * o.c + o.e, e * o.b + f * o.d + o.f};
  }
  std::pair<double, double> apply(double x, double y) const { return {a * x + c * y + e, b * x + d * y + f}; }
};

struct FontInfo {
  int first_char = 0;
  std::vector<double> widths;  // glyph space units (1/1000 em)
  double default_width = 500;

  double width(unsigned char ch) const {
    int idx = static_cast<int>(ch) - first_char;
    if (idx >= 0 && idx < static_cast<int>(widths.size()) && widths[idx] > 0) return widths[idx];
    return default_width;
  }
};

struct Glyph {
  std::string utf8;
  bool space = false;
  double ux0, uy0, ux1, uy1;  // user-space bbox
  double font_size;
};

}  // namespace

const Dict* Object::dict() const {
  if (auto* d = std::get_if<Dict>(&value)) return d;
  if (auto* s = std::get_if<Stream>(&value)) return &s->dict;
  return nullptr;
}

std::string latin1_to_utf8(std::string_view bytes) {
  std::string out;
  out.reserve(bytes.size());
  for (unsigned char c : bytes) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

ObjectPtr parse_object(std::string_view t, std::size_t& pos) {
  skip_ws(t, pos);
  if (pos >= t.size()) corrupt("unexpected end of data");
  char c = t[pos];
  if (c == '/') return make(Name{parse_name(t, pos)});
  if (c == '(') return make(parse_literal_string(t, pos));
  if (c == '<') {
    if (pos + 1 < t.size() && t[pos + 1] == '<') {
      pos += 2;
      Dict d;
      while (true) {
        skip_ws(t, pos);
        if (pos + 1 < t.size() && t[pos] == '>' && t[pos + 1] == '>') {
          pos += 2;
          break;
        }
        if (pos >= t.size() || t[pos] != '/') corrupt("dictionary key is not a name");
        std::string key = parse_name(t, pos);
        d[key] = parse_object(t, pos);
      }
      return make(std::move(d));
    }
    return make(parse_hex_string(t, pos));
  }
  if (c == '[') {
    ++pos;
    Array a;
    while (true) {
      skip_ws(t, pos);
      if (pos >= t.size()) corrupt("unterminated array");
      if (t[pos] == ']') {
        ++pos;
        break;
      }
      a.push_back(parse_object(t, pos));
    }
    return make(std::move(a));
  }
  if ((c >= '0' && c <= '9') || c == '+' || c == '-' || c == '.') {
    // Indirect reference "num gen R"?
    std::size_t p = pos;
    long num = 0, gen = 0;
    if (parse_uint_at(t, p, num)) {
      std::size_t q = p;
      skip_ws(t, q);
      if (q > p && parse_uint_at(t, q, gen)) {
        std::size_t r = q;
        skip_ws(t, r);
        if (r > q && r < t.size() && t[r] == 'R' && (r + 1 >= t.size() || !is_regular(t[r + 1]))) {
          pos = r + 1;
          return make(Ref{static_cast<int>(num), static_cast<int>(gen)});
        }
      }
    }
    std::size_t end = pos + 1;
    while (end < t.size() && ((t[end] >= '0' && t[end] <= '9') || t[end] == '.' || t[end] == '-')) ++end;
    std::string num_text(t.substr(pos, end - pos));
    pos = end;
    char* stop = nullptr;
    double v = std::strtod(num_text.c_str(), &stop);
    if (stop == num_text.c_str() && num_text != "-" && num_text != "+" && num_text != ".")
      corrupt("bad number '" + num_text + "'");
    return make(v);
  }
  std::size_t end = pos;
  while (end < t.size() && is_regular(t[end])) ++end;
  std::string_view kw = t.substr(pos, end - pos);
  if (kw == "true" || kw == "false") {
    pos = end;
    return make(kw == "true");
  }
  if (kw == "null") {
    pos = end;
    return make(std::monostate{});
  }
  corrupt("unexpected token '" + std::string(kw.substr(0, 20)) + "'");
}

Reader::Reader(std::span<const std::uint8_t> bytes) {
  std::string_view t(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  if (t.substr(0, 5) != "%PDF-") corrupt("missing %PDF- header");
  std::size_t tail_start = t.size() > 1024 ? t.size() - 1024 : 0;
  if (t.find("%%EOF", tail_start) == std::string_view::npos) corrupt("missing %%EOF (truncated file?)");

  std::optional<Dict> trailer;
  std::size_t pos = 0;
  while (pos < t.size()) {
    std::size_t hit = t.find("obj", pos);
    if (hit == std::string_view::npos) break;
    pos = hit + 3;
    if (hit + 3 < t.size() && is_regular(t[hit + 3])) continue;  // "objx"
    // Walk back over "num ws gen ws".
    std::size_t b = hit;
    if (b == 0 || !is_ws(t[b - 1])) continue;
    while (b > 0 && is_ws(t[b - 1])) --b;
    std::size_t gen_end = b;
    while (b > 0 && t[b - 1] >= '0' && t[b - 1] <= '9') --b;
    if (b == gen_end) continue;
    std::size_t gap_end = b;
    while (b > 0 && is_ws(t[b - 1])) --b;
    if (b == gap_end) continue;
    std::size_t num_end = b;
    while (b > 0 && t[b - 1] >= '0' && t[b - 1] <= '9') --b;
    if (b == num_end) continue;
    if (b > 0 && is_regular(t[b - 1])) continue;
    int num = std::atoi(std::string(t.substr(b, num_end - b)).c_str());

    std::size_t p = hit + 3;
    ObjectPtr obj = parse_object(t, p);
    skip_ws(t, p);
    if (t.substr(p, 6) == "stream") {
      const Dict* d = obj->dict();
      if (!d) corrupt("stream without dictionary");
      p += 6;
      if (p < t.size() && t[p] == '\r') ++p;
      if (p < t.size() && t[p] == '\n') ++p;
      std::size_t data_start = p;
      std::size_t data_end = std::string_view::npos;
      auto len_it = d->find("Length");
      if (len_it != d->end() && len_it->second->number()) {
        auto len = static_cast<std::size_t>(*len_it->second->number());
        if (data_start + len <= t.size()) {
          std::size_t q = data_start + len;
          skip_ws(t, q);
          if (t.substr(q, 9) == "endstream") data_end = data_start + len;
        }
      }
      if (data_end == std::string_view::npos) {
        std::size_t es = t.find("endstream", data_start);
        if (es == std::string_view::npos) corrupt("stream without endstream");
        data_end = es;
        if (data_end > data_start && t[data_end - 1] == '\n') --data_end;
        if (data_end > data_start && t[data_end - 1] == '\r') --data_end;
      }
      Stream s{*d, std::string(t.substr(data_start, data_end - data_start))};
      obj = make(std::move(s));
      p = t.find("endstream", data_end) + 9;
    }
    objects_[num] = obj;
    pos = p;
  }
  for (std::size_t tp = t.rfind("trailer"); tp != std::string_view::npos;) {
    std::size_t p = tp + 7;
    try {
      ObjectPtr o = parse_object(t, p);
      if (o->dict()) trailer = *o->dict();
    } catch (const Error&) {
    }
    break;
  }
  if (objects_.empty()) corrupt("no objects found");

  // Expand object streams.
  std::vector<std::pair<int, ObjectPtr>> extra;
  for (const auto& [num, obj] : objects_) {
    const Stream* s = obj->stream();
    if (!s) continue;
    auto type = s->dict.find("Type");
    if (type == s->dict.end() || !type->second->name() || type->second->name()->value != "ObjStm") continue;
    std::string data = decode_stream(*s);
    auto n_it = s->dict.find("N");
    auto first_it = s->dict.find("First");
    if (n_it == s->dict.end() || first_it == s->dict.end() || !n_it->second->number() ||
        !first_it->second->number())
      corrupt("object stream without /N or /First");
    int n = static_cast<int>(*n_it->second->number());
    auto first = static_cast<std::size_t>(*first_it->second->number());
    std::size_t hp = 0;
    for (int i = 0; i < n; ++i) {
      long onum = 0, off = 0;
      skip_ws(data, hp);
      if (!parse_uint_at(data, hp, onum)) corrupt("bad object stream header");
      skip_ws(data, hp);
      if (!parse_uint_at(data, hp, off)) corrupt("bad object stream header");
      std::size_t op = first + static_cast<std::size_t>(off);
      if (op >= data.size()) corrupt("object stream offset out of range");
      extra.emplace_back(static_cast<int>(onum), parse_object(data, op));
    }
  }
  for (auto& [num, obj] : extra) objects_.emplace(num, obj);

  // Encryption: trailer or cross-reference stream dictionaries.
  auto has_encrypt = [](const Dict& d) { return d.count("Encrypt") > 0; };
  if (trailer && has_encrypt(*trailer)) throw Error(ErrorCode::EncryptedPdf, "document is encrypted");
  ObjectPtr catalog;
  if (trailer) {
    auto it = trailer->find("Root");
    if (it != trailer->end()) catalog = resolve(it->second);
  }
  for (const auto& [num, obj] : objects_) {
    const Dict* d = obj->dict();
    if (!d) continue;
    auto type = d->find("Type");
    if (type == d->end() || !type->second->name()) continue;
    if (type->second->name()->value == "XRef") {
      if (has_encrypt(*d)) throw Error(ErrorCode::EncryptedPdf, "document is encrypted");
      if (!catalog) {
        auto root = d->find("Root");
        if (root != d->end()) catalog = resolve(root->second);
      }
    }
    if (!catalog && type->second->name()->value == "Catalog") catalog = obj;
  }
  if (!catalog || !catalog->dict()) corrupt("no document catalog");

  std::function<void(const ObjectPtr&, int)> walk = [&](const ObjectPtr& node_ref, int depth) {
    if (depth > 32) corrupt("page tree too deep");
    ObjectPtr node = resolve(node_ref);
    const Dict* d = node ? node->dict() : nullptr;
    if (!d) corrupt("page tree node is not a dictionary");
    auto type = d->find("Type");
    bool is_page = type != d->end() && type->second->name() && type->second->name()->value == "Page";
    auto kids = d->find("Kids");
    if (is_page || kids == d->end()) {
      pages_.push_back(node);
      return;
    }
    ObjectPtr kids_obj = resolve(kids->second);
    if (!kids_obj || !kids_obj->array()) corrupt("/Kids is not an array");
    for (const auto& kid : *kids_obj->array()) walk(kid, depth + 1);
  };
  auto pages_root = catalog->dict()->find("Pages");
  if (pages_root == catalog->dict()->end()) corrupt("catalog without /Pages");
  walk(pages_root->second, 0);
  if (pages_.empty()) corrupt("document has no pages");
}

ObjectPtr Reader::resolve(const ObjectPtr& obj) const {
  ObjectPtr cur = obj;
  for (int i = 0; i < 16 && cur && cur->ref(); ++i) {
    auto it = objects_.find(cur->ref()->num);
    if (it == objects_.end()) return nullptr;
    cur = it->second;
  }
  return cur;
}

ObjectPtr Reader::dict_get(const Dict& d, const std::string& key) const {
  auto it = d.find(key);
  return it == d.end() ? nullptr : resolve(it->second);
}

ObjectPtr Reader::inherited(const Dict& page, const std::string& key) const {
  const Dict* cur = &page;
  for (int depth = 0; cur && depth < 32; ++depth) {
    if (ObjectPtr v = dict_get(*cur, key)) return v;
    ObjectPtr parent = dict_get(*cur, "Parent");
    cur = parent ? parent->dict() : nullptr;
  }
  return nullptr;
}

std::string Reader::decode_stream(const Stream& s) const {
  ObjectPtr filter = dict_get(s.dict, "Filter");
  std::vector<std::string> filters;
  if (filter && filter->name()) filters.push_back(filter->name()->value);
  if (filter && filter->array())
    for (const auto& f : *filter->array())
      if (auto r = resolve(f); r && r->name()) filters.push_back(r->name()->value);
  std::string data = s.raw;
  for (const auto& f : filters) {
    if (f == "FlateDecode" || f == "Fl") {
      data = inflate_all(data);
    } else if (f == "DCTDecode") {
      // left encoded; only image consumers handle it
    } else {
      corrupt("unsupported stream filter /" + f);
    }
  }
  return data;
}

std::pair<double, double> Reader::page_size(std::size_t page) const {
  const Dict& d = *pages_.at(page)->dict();
  ObjectPtr box = inherited(d, "MediaBox");
  if (box && box->array() && box->array()->size() == 4) {
    std::array<double, 4> v{};
    for (int i = 0; i < 4; ++i) {
      ObjectPtr n = resolve((*box->array())[i]);
      if (!n || !n->number()) corrupt("bad MediaBox");
      v[i] = *n->number();
    }
    return {std::abs(v[2] - v[0]), std::abs(v[3] - v[1])};
  }
  return {612.0, 792.0};
}

std::string Reader::page_content(std::size_t page) const {
  const Dict& d = *pages_.at(page)->dict();
  ObjectPtr contents = dict_get(d, "Contents");
  std::string out;
  if (!contents) return out;
  auto append = [&](const ObjectPtr& o) {
    ObjectPtr r = resolve(o);
    if (r && r->stream()) {
      out += decode_stream(*r->stream());
      out.push_back('\n');
    }
  };
  if (contents->array()) {
    for (const auto& c : *contents->array()) append(c);
  } else {
    append(contents);
  }
  return out;
}

namespace {

// Operand/operator walk over a content stream.
template <typename OnOp>
void walk_content(std::string_view t, OnOp&& on_op) {
  std::vector<ObjectPtr> operands;
  std::size_t pos = 0;
  while (true) {
    skip_ws(t, pos);
    if (pos >= t.size()) break;
    char c = t[pos];
    if (c == '/' || c == '(' || c == '<' || c == '[' || (c >= '0' && c <= '9') || c == '+' || c == '-' ||
        c == '.') {
      // Content streams never contain references; parse numbers plainly so
      // "0 0 R"-like sequences cannot arise from "1 0 0 1 re".
      if ((c >= '0' && c <= '9') || c == '+' || c == '-' || c == '.') {
        std::size_t end = pos + 1;
        while (end < t.size() && ((t[end] >= '0' && t[end] <= '9') || t[end] == '.')) ++end;
        std::string num(t.substr(pos, end - pos));
        pos = end;
        operands.push_back(make(std::strtod(num.c_str(), nullptr)));
      } else {
        operands.push_back(parse_object(t, pos));
      }
      continue;
    }
    if (c == ']' || c == '>' || c == ')' || c == '{' || c == '}') {
      ++pos;  // stray delimiter
      continue;
    }
    std::size_t end = pos;
    while (end < t.size() && is_regular(t[end])) ++end;
    std::string op(t.substr(pos, end - pos));
    pos = end;
    if (op == "true" || op == "false") {
      operands.push_back(make(op == "true"));
      continue;
    }
    if (op == "null") {
      operands.push_back(make(std::monostate{}));
      continue;
    }
    if (op == "BI") {
      std::size_t ei = pos;
      while (true) {
        ei = t.find("EI", ei);
        if (ei == std::string_view::npos) {
          pos = t.size();
          break;
        }
        if (ei > 0 && is_ws(t[ei - 1]) && (ei + 2 >= t.size() || is_ws(t[ei + 2]))) {
          pos = ei + 2;
          break;
        }
        ei += 2;
      }
      operands.clear();
      continue;
    }
    on_op(op, operands);
    operands.clear();
  }
}

double num_at(const std::vector<ObjectPtr>& ops, std::size_t i) {
  if (i >= ops.size() || !ops[i]->number()) return 0.0;
  return *ops[i]->number();
}

}  // namespace

std::vector<Token> Reader::page_tokens(std::size_t page, int dpi) const {
  const Dict& pd = *pages_.at(page)->dict();
  auto [pw, ph] = page_size(page);
  (void)pw;
  std::map<std::string, FontInfo> fonts;
  if (ObjectPtr res = inherited(pd, "Resources"); res && res->dict()) {
    if (ObjectPtr fdict = dict_get(*res->dict(), "Font"); fdict && fdict->dict()) {
      for (const auto& [name, fref] : *fdict->dict()) {
        FontInfo info;
        ObjectPtr f = resolve(fref);
        if (f && f->dict()) {
          ObjectPtr base = dict_get(*f->dict(), "BaseFont");
          if (base && base->name() && base->name()->value.find("Courier") != std::string::npos)
            info.default_width = 600;
          ObjectPtr widths = dict_get(*f->dict(), "Widths");
          ObjectPtr first = dict_get(*f->dict(), "FirstChar");
          if (widths && widths->array() && first && first->number()) {
            info.first_char = static_cast<int>(*first->number());
            for (const auto& w : *widths->array()) {
              ObjectPtr wn = resolve(w);
              info.widths.push_back(wn && wn->number() ? *wn->number() : 0.0);
            }
          }
        }
        fonts[name] = info;
      }
    }
  }

  std::vector<Glyph> glyphs;
  Matrix ctm;
  std::vector<Matrix> ctm_stack;
  Matrix tm, tlm;
  FontInfo default_font;
  const FontInfo* font = &default_font;
  double font_size = 12, leading = 0, char_sp = 0, word_sp = 0, hscale = 1, rise = 0;

  auto show = [&](const std::string& bytes) {
    for (unsigned char ch : bytes) {
      double w0 = font->width(ch) / 1000.0;
      double adv = (w0 * font_size + char_sp + (ch == ' ' ? word_sp : 0)) * hscale;
      Matrix m = tm.then(ctm);
      double gw = std::max(w0 * font_size * hscale, 0.1);
      std::array<std::pair<double, double>, 4> corners{m.apply(0, rise - 0.2 * font_size),
                                                       m.apply(gw, rise - 0.2 * font_size),
                                                       m.apply(0, rise + 0.8 * font_size),
                                                       m.apply(gw, rise + 0.8 * font_size)};
      Glyph g;
      g.ux0 = g.ux1 = corners[0].first;
      g.uy0 = g.uy1 = corners[0].second;
      for (auto [x, y] : corners) {
        g.ux0 = std::min(g.ux0, x);
        g.ux1 = std::max(g.ux1, x);
        g.uy0 = std::min(g.uy0, y);
        g.uy1 = std::max(g.uy1, y);
      }
      g.space = ch == ' ' || ch == '\t' || ch == 0xA0;
      g.utf8 = latin1_to_utf8(std::string(1, static_cast<char>(ch)));
      g.font_size = std::abs(font_size * std::sqrt(std::abs(m.a * m.d - m.b * m.c)));
      glyphs.push_back(std::move(g));
      tm = Matrix{1, 0, 0, 1, adv, 0}.then(tm);
    }
  };
  auto next_line = [&] {
    tlm = Matrix{1, 0, 0, 1, 0, -leading}.then(tlm);
    tm = tlm;
  };

  walk_content(page_content(page), [&](const std::string& op, const std::vector<ObjectPtr>& a) {
    if (op == "q") {
      ctm_stack.push_back(ctm);
    } else if (op == "Q") {
      if (!ctm_stack.empty()) {
        ctm = ctm_stack.back();
        ctm_stack.pop_back();
      }
    } else if (op == "cm" && a.size() >= 6) {
      ctm = Matrix{num_at(a, 0), num_at(a, 1), num_at(a, 2), num_at(a, 3), num_at(a, 4), num_at(a, 5)}.then(ctm);
    } else if (op == "BT") {
      tm = tlm = Matrix{};
    } else if (op == "Tf" && a.size() >= 2) {
      font_size = num_at(a, 1);
      auto it = a[0]->name() ? fonts.find(a[0]->name()->value) : fonts.end();
      font = it == fonts.end() ? &default_font : &it->second;
    } else if (op == "Td" && a.size() >= 2) {
      tlm = Matrix{1, 0, 0, 1, num_at(a, 0), num_at(a, 1)}.then(tlm);
      tm = tlm;
    } else if (op == "TD" && a.size() >= 2) {
      leading = -num_at(a, 1);
      tlm = Matrix{1, 0, 0, 1, num_at(a, 0), num_at(a, 1)}.then(tlm);
      tm = tlm;
    } else if (op == "Tm" && a.size() >= 6) {
      tm = tlm = Matrix{num_at(a, 0), num_at(a, 1), num_at(a, 2), num_at(a, 3), num_at(a, 4), num_at(a, 5)};
    } else if (op == "T*") {
      next_line();
    } else if (op == "TL" && !a.empty()) {
      leading = num_at(a, 0);
    } else if (op == "Tc" && !a.empty()) {
      char_sp = num_at(a, 0);
    } else if (op == "Tw" && !a.empty()) {
      word_sp = num_at(a, 0);
    } else if (op == "Tz" && !a.empty()) {
      hscale = num_at(a, 0) / 100.0;
    } else if (op == "Ts" && !a.empty()) {
      rise = num_at(a, 0);
    } else if (op == "Tj" && !a.empty() && a[0]->string()) {
      show(*a[0]->string());
    } else if (op == "'" && !a.empty() && a[0]->string()) {
      next_line();
      show(*a[0]->string());
    } else if (op == "\"" && a.size() >= 3 && a[2]->string()) {
      word_sp = num_at(a, 0);
      char_sp = num_at(a, 1);
      next_line();
      show(*a[2]->string());
    } else if (op == "TJ" && !a.empty() && a[0]->array()) {
      for (const auto& el : *a[0]->array()) {
        if (el->string()) {
          show(*el->string());
        } else if (el->number()) {
          double tx = -*el->number() / 1000.0 * font_size * hscale;
          tm = Matrix{1, 0, 0, 1, tx, 0}.then(tm);
        }
      }
    }
  });

  // Group glyphs into words by adjacency.
  double scale = dpi / 72.0;
  std::vector<Token> tokens;
  Token cur;
  bool open = false;
  double last_x1 = 0, last_cy = 0, last_size = 0;
  auto flush = [&] {
    if (open && !cur.text.empty()) tokens.push_back(cur);
    open = false;
    cur = Token{};
  };
  for (const Glyph& g : glyphs) {
    if (g.space) {
      flush();
      continue;
    }
    double cy = (g.uy0 + g.uy1) / 2;
    if (open) {
      double gap = g.ux0 - last_x1;
      double tol = std::max(last_size, g.font_size);
      if (gap > 0.3 * tol || gap < -0.5 * tol || std::abs(cy - last_cy) > 0.5 * tol) flush();
    }
    BBox box{g.ux0 * scale, (ph - g.uy1) * scale, g.ux1 * scale, (ph - g.uy0) * scale};
    if (!open) {
      cur.bbox = box;
      cur.page = static_cast<int>(page);
      cur.confidence = 1.0;
      cur.source = "embedded";
      open = true;
    } else {
      cur.bbox = cur.bbox.united(box);
    }
    cur.text += g.utf8;
    last_x1 = g.ux1;
    last_cy = cy;
    last_size = g.font_size;
  }
  flush();
  return tokens;
}

std::optional<DecodedImage> Reader::page_image(std::size_t page) const {
  const Dict& pd = *pages_.at(page)->dict();
  ObjectPtr res = inherited(pd, "Resources");
  if (!res || !res->dict()) return std::nullopt;
  ObjectPtr xobjects = dict_get(*res->dict(), "XObject");
  if (!xobjects || !xobjects->dict()) return std::nullopt;

  std::vector<std::string> drawn;
  bool has_text = false;
  walk_content(page_content(page), [&](const std::string& op, const std::vector<ObjectPtr>& a) {
    if (op == "Do" && !a.empty() && a[0]->name()) drawn.push_back(a[0]->name()->value);
    if (op == "Tj" || op == "TJ" || op == "'" || op == "\"") has_text = true;
  });
  if (has_text || drawn.size() != 1) return std::nullopt;
  ObjectPtr xo = dict_get(*xobjects->dict(), drawn[0]);
  if (!xo || !xo->stream()) return std::nullopt;
  const Stream& s = *xo->stream();
  ObjectPtr subtype = dict_get(s.dict, "Subtype");
  if (!subtype || !subtype->name() || subtype->name()->value != "Image") return std::nullopt;

  auto get_int = [&](const char* key) {
    ObjectPtr o = dict_get(s.dict, key);
    return o && o->number() ? static_cast<int>(*o->number()) : 0;
  };
  int w = get_int("Width"), h = get_int("Height"), bpc = get_int("BitsPerComponent");
  ObjectPtr cs = dict_get(s.dict, "ColorSpace");
  std::string space = cs && cs->name() ? cs->name()->value : "DeviceGray";
  ObjectPtr filter = dict_get(s.dict, "Filter");
  std::string fname = filter && filter->name() ? filter->name()->value : "";

  DecodedImage out;
  if (fname == "DCTDecode") {
    out = decode_jpeg(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.raw.data()), s.raw.size()));
  } else {
    if (bpc != 8 || w <= 0 || h <= 0) throw Error(ErrorCode::DecodeError, "unsupported embedded image layout");
    std::string data = decode_stream(s);
    int channels = space == "DeviceRGB" ? 3 : space == "DeviceGray" ? 1 : 0;
    if (channels == 0) throw Error(ErrorCode::DecodeError, "unsupported image color space " + space);
    if (data.size() < static_cast<std::size_t>(w) * h * channels)
      throw Error(ErrorCode::DecodeError, "embedded image data too short");
    out.image = PageImage(w, h, 300);
    for (std::size_t i = 0; i < out.image.pixels.size(); ++i) {
      if (channels == 1) {
        out.image.pixels[i] = static_cast<std::uint8_t>(data[i]);
      } else {
        auto r = static_cast<std::uint8_t>(data[3 * i]), g = static_cast<std::uint8_t>(data[3 * i + 1]),
             b = static_cast<std::uint8_t>(data[3 * i + 2]);
        out.image.pixels[i] = static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b) / 1000);
      }
    }
  }
  auto [pw, ph] = page_size(page);
  (void)ph;
  out.image.dpi = static_cast<int>(std::lround(out.image.width / (pw / 72.0)));
  out.dpi_known = true;
  out.image.page = static_cast<int>(page);
  if (ObjectPtr fid = dict_get(s.dict, "InvxFixture"); fid && fid->string()) out.image.fixture_id = *fid->string();
  return out;
}

}  // namespace invx::pdf
