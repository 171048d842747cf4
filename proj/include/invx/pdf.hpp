#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "invx/image.hpp"
#include "invx/model.hpp"

namespace invx::pdf {

struct Object;
using ObjectPtr = std::shared_ptr<const Object>;

struct Ref {
  int num = 0;
  int gen = 0;
};
struct Name {
  std::string value;
};
using Array = std::vector<ObjectPtr>;
using Dict = std::map<std::string, ObjectPtr>;
struct Stream {
  Dict dict;
  std::string raw;  // still encoded
};

struct Object {
  std::variant<std::monostate, bool, double, std::string, Name, Array, Dict, Ref, Stream> value;

  bool is_null() const { return std::holds_alternative<std::monostate>(value); }
  const double* number() const { return std::get_if<double>(&value); }
  const std::string* string() const { return std::get_if<std::string>(&value); }
  const Name* name() const { return std::get_if<Name>(&value); }
  const Array* array() const { return std::get_if<Array>(&value); }
  const Dict* dict() const;  // dict of a plain dict or of a stream
  const Ref* ref() const { return std::get_if<Ref>(&value); }
  const Stream* stream() const { return std::get_if<Stream>(&value); }
};

/// Minimal reader: locates "N G obj" definitions by scanning (xref tables are
/// not trusted), walks the page tree, and decodes FlateDecode streams.
class Reader {
 public:
  /// Throws CorruptPdf / EncryptedPdf.
  explicit Reader(std::span<const std::uint8_t> bytes);

  std::size_t page_count() const { return pages_.size(); }
  /// MediaBox width/height in points.
  std::pair<double, double> page_size(std::size_t page) const;
  /// Concatenated, decoded content streams of one page.
  std::string page_content(std::size_t page) const;
  /// Embedded-text tokens of one page with bboxes in pixels at `dpi`.
  std::vector<Token> page_tokens(std::size_t page, int dpi) const;
  /// The full-page image of an image-only page, if the page draws exactly one
  /// image XObject and no text.
  std::optional<DecodedImage> page_image(std::size_t page) const;

  ObjectPtr resolve(const ObjectPtr& obj) const;

 private:
  ObjectPtr dict_get(const Dict& d, const std::string& key) const;
  ObjectPtr inherited(const Dict& page, const std::string& key) const;
  std::string decode_stream(const Stream& s) const;

  std::map<int, ObjectPtr> objects_;
  std::vector<ObjectPtr> pages_;
};

/// Parses one object from `text` starting at `pos`; exposed for tests.
ObjectPtr parse_object(std::string_view text, std::size_t& pos);

/// Decodes a PDF literal or hex string body (already unescaped) from
/// WinAnsi-ish single bytes to UTF-8.
std::string latin1_to_utf8(std::string_view bytes);

}  // namespace invx::pdf
