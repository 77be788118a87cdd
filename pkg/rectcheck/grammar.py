"""Grammar pieces shared by the text formats, and number formatting that
survives a round trip.
"""

from dataclasses import dataclass
import pyparsing as pp
from .errors import ParseError


@dataclass(frozen=True)
class NameAt:
    """A parsed name and the string offset it was found at."""

    text: str
    loc: int


def make_name_grammar():
    # species such as AmtB:NH4 carry colons, but only between two name parts
    part = pp.Word(pp.alphas + '_', pp.alphanums + '_')
    return pp.Combine(part + pp.ZeroOrMore(':' + part))


name = make_name_grammar()
located_name = name.copy().set_parse_action(
    lambda s, loc, toks: NameAt(toks[0], loc))

digits = pp.Word(pp.nums)
exponent = pp.CaselessLiteral('e') + pp.Opt(pp.one_of('+ -')) + digits
unsigned_text = pp.Combine(
    (digits + pp.Opt('.' + pp.Opt(digits)) | '.' + digits) +
    pp.Opt(exponent))
signed_text = pp.Combine(pp.Opt(pp.one_of('+ -')) + unsigned_text)
unsigned = unsigned_text.copy().set_parse_action(lambda toks: float(toks[0]))
number = signed_text.copy().set_parse_action(lambda toks: float(toks[0]))
number_list = pp.DelimitedList(number)


def keyword(word):
    """``WORD:`` at the start of a line, any case."""
    return pp.Suppress(pp.CaselessKeyword(word) + ':')


def fail(s, loc, message):
    """Abort the whole parse at ``loc`` with our own message."""
    raise pp.ParseFatalException(s, loc, message)


def parse_text(grammar, text, source=None, line=None):
    """Parse all of ``text``. Pass ``line`` when the text is a single line of
    a larger file; columns are then relative to that line.
    """
    try:
        return grammar.parse_string(text, parse_all=True)
    except pp.ParseBaseException as e:
        raise ParseError(e.msg, e.lineno if line is None else line, e.col,
                         source) from None


def error_at(text, loc, message, source=None, line=None):
    """A ParseError pointing at offset ``loc`` of ``text``."""
    return ParseError(message, pp.lineno(loc, text) if line is None else line,
                      pp.col(loc, text), source)


def format_number(value):
    """Shortest text that parses back to the same float."""
    text = repr(float(value))
    if text.endswith('.0'):
        text = text[:-2]
    return text
