# prompts/prompt_engine.py
# Templates under prompts/templates are used byte for byte, original spelling included;
# normalized=True switches to a copy-edited rendering.
import os
import logging
from dataclasses import dataclass
from functools import lru_cache
from string import Template
from typing import Optional, Tuple

from corpus.benchmark_corpus import gold_output
from schemas.output_schema import schema_text
from utils.exceptions import EmptyExemplars

logger = logging.getLogger('medbench.prompts')

TEMPLATES_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'templates')
NOTE_SLOT = '${note}'
EXEMPLAR_SEPARATOR = '\n\n'

SPELLING_FIXES = (
    ('verbatum', 'verbatim'),
    ('ouput', 'output'),
)


@dataclass(frozen=True)
class Exemplar:
    """A worked example: a note and the response expected for it"""
    note: object
    output: str


@dataclass(frozen=True)
class ZeroShot:
    label: str = 'zero_shot'
    kind = 'zero_shot'


@dataclass(frozen=True)
class FewShot:
    exemplars: Tuple[Exemplar, ...]
    label: str = 'few_shot'
    kind = 'few_shot'

    def __post_init__(self):
        if not self.exemplars:
            raise EmptyExemplars("few-shot strategy needs at least one exemplar")

    @property
    def exemplar_ids(self):
        return tuple(exemplar.note.id for exemplar in self.exemplars)


@dataclass(frozen=True)
class Rag:
    k: int = 20
    token_budget: int = 2048
    label: str = 'rag'
    kind = 'rag'

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.token_budget < 1:
            raise ValueError(f"token_budget must be >= 1, got {self.token_budget}")


@dataclass(frozen=True)
class BuiltPrompt:
    text: str
    strategy_label: str
    target_note_id: str
    leakage_flag: bool = False
    note_span: Tuple[int, int] = (0, 0)
    exemplar_ids: Tuple[str, ...] = ()
    context: Optional[str] = None

    def note_slot(self):
        """The text sitting in the note slot"""
        start, end = self.note_span
        return self.text[start:end]


@lru_cache(maxsize=None)
def load_template(name, normalized=False):
    """Read a template file; the file's single trailing newline is not part of it"""
    path = os.path.join(TEMPLATES_DIR, f'{name}.txt')
    with open(path, 'r', encoding='utf-8', newline='') as f:
        text = f.read()
    if text.endswith('\n'):
        text = text[:-1]
    if normalized:
        for wrong, right in SPELLING_FIXES:
            text = text.replace(wrong, right)
    return text


def directive_block(variant, include_schema=True, normalized=False):
    """The instruction text shared by every strategy

    Args:
        variant (SchemaVariant): Structure to request
        include_schema (bool): Inline the structure listing after the directions
        normalized (bool): Use the copy-edited template text

    Returns:
        str: Directions, optionally followed by the structure listing
    """
    directive = load_template('directive', normalized)
    if not include_schema:
        return directive + ' '
    slot = Template(load_template('schema_slot', normalized))
    return directive + slot.substitute(schema=schema_text(variant))


def _render(template_name, note, normalized, **values):
    """Fill a template and locate the note slot in the result"""
    raw = load_template(template_name, normalized)
    if raw.count(NOTE_SLOT) != 1:
        raise ValueError(f"template {template_name!r} must contain exactly one {NOTE_SLOT}")

    before, after = raw.split(NOTE_SLOT)
    prefix = Template(before).substitute(values)
    suffix = Template(after).substitute(values)
    text = prefix + note.note_text + suffix
    return text, (len(prefix), len(prefix) + len(note.note_text))


def build_zero_shot(note, variant, include_schema=True, normalized=False, label='zero_shot'):
    """Directions, structure and the note after "Doctors note:"

    Args:
        note (CaseNote): Target note
        variant (SchemaVariant): Structure to request
        include_schema (bool, optional): Inline the structure listing
        normalized (bool, optional): Use the copy-edited templates
        label (str, optional): Strategy label recorded on the prompt

    Returns:
        BuiltPrompt: The rendered prompt
    """
    directive = directive_block(variant, include_schema, normalized)
    text, span = _render('zero_shot', note, normalized, directive=directive)
    return BuiltPrompt(text=text, strategy_label=label, target_note_id=note.id, note_span=span)


def render_exemplar(exemplar, normalized=False):
    template = Template(load_template('exemplar', normalized))
    return template.substitute(note=exemplar.note.note_text, output=exemplar.output)


def build_few_shot(note, variant, exemplars, include_schema=True, normalized=False,
                   label='few_shot'):
    """Directions, worked examples, then the target note

    Raises:
        EmptyExemplars: No exemplars given
    """
    exemplars = tuple(exemplars)
    if not exemplars:
        raise EmptyExemplars("few-shot prompt needs at least one exemplar")

    directive = directive_block(variant, include_schema, normalized)
    block = EXEMPLAR_SEPARATOR.join(render_exemplar(e, normalized) for e in exemplars)
    text, span = _render('few_shot', note, normalized, directive=directive, exemplars=block)

    exemplar_ids = tuple(e.note.id for e in exemplars)
    leakage = note.id in exemplar_ids
    if leakage:
        logger.debug(f"Note {note.id} is also a few-shot exemplar")

    return BuiltPrompt(text=text, strategy_label=label, target_note_id=note.id,
                       leakage_flag=leakage, note_span=span, exemplar_ids=exemplar_ids)


def build_rag(note, variant, context, include_schema=True, normalized=False, label='rag'):
    """Retrieved context, then the directions and note framed as a question"""
    context = context or ''
    directive = directive_block(variant, include_schema, normalized)
    text, span = _render('rag', note, normalized, directive=directive, context=context)
    return BuiltPrompt(text=text, strategy_label=label, target_note_id=note.id,
                       note_span=span, context=context)


def make_exemplars(corpus, note_ids, variant):
    """Exemplars for the given note ids, each paired with its gold response"""
    exemplars = []
    for note_id in note_ids:
        note = corpus.get(note_id)
        if note is None:
            raise KeyError(f"exemplar note {note_id!r} is not in the corpus")
        exemplars.append(Exemplar(note=note, output=gold_output(note, variant)))
    return tuple(exemplars)


def build_prompt(strategy, note, variant, context='', include_schema=True, normalized=False):
    """Dispatch on the strategy type

    Args:
        strategy (ZeroShot, FewShot or Rag): Prompting technique
        note (CaseNote): Target note
        variant (SchemaVariant): Structure to request
        context (str, optional): Retrieved context for Rag
        include_schema (bool, optional): Inline the structure listing
        normalized (bool, optional): Use the copy-edited templates

    Returns:
        BuiltPrompt: The rendered prompt
    """
    if isinstance(strategy, ZeroShot):
        return build_zero_shot(note, variant, include_schema, normalized, label=strategy.label)
    if isinstance(strategy, FewShot):
        return build_few_shot(note, variant, strategy.exemplars, include_schema, normalized,
                              label=strategy.label)
    if isinstance(strategy, Rag):
        return build_rag(note, variant, context, include_schema, normalized, label=strategy.label)
    raise TypeError(f"unknown strategy {strategy!r}")
