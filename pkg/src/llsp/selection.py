"""Experiment selection strings.

A selection names which segments of which Bonn sets make up the
non-seizure and the seizure class of an experiment:

    A[1-25] B[26-50] C[51-75] D[76-100] vs E[1-100]

Left of ``vs`` is the non-seizure class, right of it the seizure class.
Each block is a set tag A-E and an inclusive, 1-based index range.
A bare tag (``E``) stands for the whole set.
"""
from enum import Enum
from typing import List, Tuple

from parsimonious.exceptions import ParseError
from parsimonious.grammar import Grammar
from parsimonious.nodes import NodeVisitor
from pydantic import BaseModel, ConfigDict, PositiveInt, model_validator

from .errors import SelectionError

#: Number of segments in each Bonn set.
SET_SIZE = 100


class SetTag(str, Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    E = "E"


class SetBlock(BaseModel):
    model_config = ConfigDict(frozen=True)

    tag:   SetTag
    first: PositiveInt = 1
    last:  PositiveInt = SET_SIZE

    @model_validator(mode="after")
    def _check(self):
        if self.last < self.first:
            raise ValueError("empty range {}[{}-{}]".format(self.tag.value, self.first, self.last))
        return self

    @property
    def indices(self) -> range:
        return range(self.first, self.last + 1)

    def __len__(self):
        return self.last - self.first + 1

    def __str__(self):
        return "{}[{}-{}]".format(self.tag.value, self.first, self.last)


grammar = Grammar(
    r"""
    selection   = ws side ws1 "vs" ws1 side ws
    side        = block more_blocks
    more_blocks = (ws1 block)*
    block       = tag range?
    range       = "[" ws int ws "-" ws int ws "]"

    tag         = ~r"[A-Ea-e]"
    int         = ~r"[0-9]+"

    ws          = ~r"\s*"
    ws1         = ~r"\s+"
    """
)


class SelectionVisitor(NodeVisitor):
    """Turns a parse tree into ``(nonseizure_blocks, seizure_blocks)``."""

    unwrapped_exceptions = (SelectionError,)

    def visit_selection(self, node, visited_children):
        _, nonseizure, _, _, _, seizure, _ = visited_children
        return nonseizure, seizure

    def visit_side(self, node, visited_children):
        first, rest = visited_children
        return [first] + rest

    def visit_more_blocks(self, node, visited_children):
        return [child[1] for child in visited_children]

    def visit_block(self, node, visited_children):
        tag, rng = visited_children
        if isinstance(rng, list):
            first, last = rng[0]
        else:
            first, last = 1, SET_SIZE
        try:
            return SetBlock(tag=tag, first=first, last=last)
        except ValueError as err:
            raise SelectionError("bad block '{}': {}".format(node.text, err))

    def visit_range(self, node, visited_children):
        _, _, lo, _, _, _, hi, _, _ = visited_children
        return lo, hi

    def visit_tag(self, node, visited_children):
        return node.text.upper()

    def visit_int(self, node, visited_children):
        return int(node.text)

    def generic_visit(self, node, visited_children):
        """ The generic visit method. """
        return visited_children or node


def parse_selection(text : str) -> Tuple[List[SetBlock], List[SetBlock]]:
    try:
        tree = grammar.parse(text)
    except ParseError as err:
        raise SelectionError("cannot parse selection '{}': {}".format(text, err))
    return SelectionVisitor().visit(tree)


def format_selection(nonseizure, seizure) -> str:
    return "{} vs {}".format(" ".join(map(str, nonseizure)), " ".join(map(str, seizure)))
