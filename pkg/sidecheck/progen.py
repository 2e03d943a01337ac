"""
Program generators.

Generators are values of type ``Gen``: a function from a random stream to
a result, composed with ``map``, ``bind``, ``pair``, ``sequence``,
``one_of`` and ``list_of``. Every stream is a numpy ``Generator`` over the
PCG64 bit generator, so a seed replays the same program on every platform.
"""

from typing import Any, Callable, Dict, Generic, List, Optional, Sequence, Tuple, TypeVar
import logging

import numpy as np

from sidecheck.bir import isa
from sidecheck.bir.isa import GENERAL_REGISTERS, ZERO_REGISTER, Instruction, Program
from sidecheck.config import ClassWeights, GeneratorConfig

logger = logging.getLogger("sidecheck")

T = TypeVar("T")
U = TypeVar("U")

LINE_BYTES = 64
LOAD_OFFSETS = (None, 0, 8, 16, 32, 64, 128)


def make_rng(seed: Any) -> np.random.Generator:
    """A PCG64 stream; ``seed`` may be an int or a sequence of ints."""
    return np.random.Generator(np.random.PCG64(seed))


class Gen(Generic[T]):
    """
    A composable random generator.

    Example:
        >>> g = pair(int_range(0, 3), elements(["a", "b"]))
        >>> g.run(7) == g.run(7)
        True
    """

    def __init__(self, sample: Callable[[np.random.Generator], T], name: Optional[str] = None):
        self.sample = sample
        self.name = name or "gen"

    def __call__(self, rng: np.random.Generator) -> T:
        return self.sample(rng)

    def run(self, seed: Any) -> T:
        return self.sample(make_rng(seed))

    def map(self, f: Callable[[T], U]) -> "Gen[U]":
        return Gen(lambda rng: f(self.sample(rng)), f"map({self.name})")

    def bind(self, f: Callable[[T], "Gen[U]"]) -> "Gen[U]":
        return Gen(lambda rng: f(self.sample(rng))(rng), f"bind({self.name})")

    def __repr__(self) -> str:
        return f"Gen(name='{self.name}')"


def constant(value: T) -> Gen[T]:
    return Gen(lambda rng: value, "constant")


def elements(choices: Sequence[T]) -> Gen[T]:
    if not choices:
        raise ValueError("elements() needs at least one choice")
    items = list(choices)
    return Gen(lambda rng: items[int(rng.integers(len(items)))], "elements")


def int_range(lo: int, hi: int) -> Gen[int]:
    """Uniform integer in ``[lo, hi]``."""
    return Gen(lambda rng: int(rng.integers(lo, hi + 1)), f"int_range({lo}, {hi})")


def pair(a: Gen[T], b: Gen[U]) -> Gen[Tuple[T, U]]:
    return Gen(lambda rng: (a(rng), b(rng)), "pair")


def sequence(gens: Sequence[Gen[T]]) -> Gen[List[T]]:
    return Gen(lambda rng: [g(rng) for g in gens], "sequence")


def one_of(weighted: Sequence[Tuple[float, Gen[T]]]) -> Gen[T]:
    """Pick one generator with probability proportional to its weight."""
    live = [(w, g) for w, g in weighted if w > 0]
    if not live:
        raise ValueError("one_of() needs a positive weight")
    total = sum(w for w, _ in live)
    probs = [w / total for w, _ in live]

    def sample(rng: np.random.Generator) -> T:
        return live[int(rng.choice(len(live), p=probs))][1](rng)

    return Gen(sample, "one_of")


def list_of(gen: Gen[T], min_len: int, max_len: int) -> Gen[List[T]]:
    return int_range(min_len, max_len).bind(lambda n: sequence([gen] * n))


def reg_name(
    allow_xzr: bool = False, registers: Sequence[str] = GENERAL_REGISTERS
) -> Gen[str]:
    return elements(list(registers) + ([ZERO_REGISTER] if allow_xzr else []))


def address_immediate(choices: Sequence[Optional[int]] = LOAD_OFFSETS) -> Gen[Optional[int]]:
    """Memory offset of a load or store; None means no immediate."""
    return elements(choices)


# ---------------------------------------------------------------------------
# Instruction classes
# ---------------------------------------------------------------------------

def _small_imm() -> Gen[int]:
    return elements([0, 1, 8, 64, 128, 4096])


def load_store(registers: Sequence[str], allow_xzr: bool = True) -> Gen[List[Instruction]]:
    regs = reg_name(False, registers)
    load = sequence([reg_name(allow_xzr, registers), regs, address_immediate()]).map(
        lambda p: [isa.ldr(p[0], p[1], p[2])]
    )
    store = sequence([regs, regs, address_immediate()]).map(lambda p: [isa.str_(p[0], p[1], p[2])])
    return one_of([(3.0, load), (1.0, store)])


def arith(registers: Sequence[str]) -> Gen[List[Instruction]]:
    regs = reg_name(False, registers)
    src = one_of([(1.0, regs), (1.0, _small_imm())])
    return one_of(
        [
            (1.0, pair(regs, src).map(lambda p: [isa.mov(*p)])),
            (2.0, sequence([regs, regs, src]).map(lambda p: [isa.add(*p)])),
            (1.0, sequence([regs, regs, src]).map(lambda p: [isa.sub(*p)])),
            (1.0, sequence([regs, regs, regs]).map(lambda p: [isa.mul(*p)])),
        ]
    )


def compare_branch(registers: Sequence[str], room: int) -> Gen[List[Instruction]]:
    """A compare or a forward branch landing at most ``room`` instructions ahead."""
    regs = reg_name(False, registers)
    cmp = pair(regs, one_of([(1.0, regs), (1.0, _small_imm())]))
    target = int_range(1, max(room, 1))
    return one_of(
        [
            (2.0, cmp.map(lambda p: [isa.cmp(*p)])),
            (2.0, target.map(lambda t: [isa.beq(t)])),
            (1.0, pair(regs, target).map(lambda p: [isa.cbz(*p)])),
            (1.0, pair(regs, target).map(lambda p: [isa.cbnz(*p)])),
            (0.5, target.map(lambda t: [isa.b(t)])),
        ]
    )


def cond_select(registers: Sequence[str]) -> Gen[List[Instruction]]:
    """
    A conditional move: ``cbz``/``cbnz`` skipping one ``mov``.

    The reduced ISA has no ``csel``; this is its two-instruction form.
    """
    regs = reg_name(False, registers)
    skip = elements([isa.cbz, isa.cbnz])
    return sequence([skip, regs, regs, regs]).map(
        lambda p: [p[0](p[1], 2), isa.mov(p[2], p[3])]
    )


def nops() -> Gen[List[Instruction]]:
    return constant([isa.nop()])


# ---------------------------------------------------------------------------
# Program generators
# ---------------------------------------------------------------------------

def random_program(
    weights: ClassWeights,
    length: int,
    registers: Sequence[str] = GENERAL_REGISTERS,
    allow_xzr: bool = True,
) -> Gen[Program]:
    """Exactly ``length`` instructions drawn class by class according to ``weights``."""
    if length < 1:
        raise ValueError("program length must be at least 1")

    def sample(rng: np.random.Generator) -> Program:
        program: List[Instruction] = []
        while len(program) < length:
            pc = len(program)
            remaining = length - pc
            w = weights.as_dict()
            if remaining < 2:
                w["cond_select"] = 0.0
            if not any(v > 0 for v in w.values()):
                w["nop"] = 1.0
            classes = one_of(
                [
                    (w["load_store"], load_store(registers, allow_xzr)),
                    (w["arith"], arith(registers)),
                    (w["compare_branch"], compare_branch(registers, remaining)),
                    (w["cond_select"], cond_select(registers)),
                    (w["nop"], nops()),
                ]
            )
            program.extend(classes(rng))
        return isa.validate_program(program)

    return Gen(sample, "random_program")


def gen_random(weights: ClassWeights, length: int, seed: Any, **kwargs: Any) -> Program:
    """
    A random program of exactly ``length`` instructions.

    Example:
        >>> len(gen_random(ClassWeights(), 5, seed=42))
        5
    """
    return random_program(weights, length, **kwargs).run(seed)


def loads_program(
    max_len: int, registers: Sequence[str] = GENERAL_REGISTERS, allow_xzr: bool = True
) -> Gen[Program]:
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    load = sequence([reg_name(allow_xzr, registers), reg_name(False, registers), address_immediate()])
    return list_of(load, 1, max_len).map(
        lambda items: isa.validate_program([isa.ldr(*p) for p in items])
    )


def gen_loads(max_len: int, seed: Any, **kwargs: Any) -> Program:
    """Between 1 and ``max_len`` loads, destinations possibly ``xzr``."""
    return loads_program(max_len, **kwargs).run(seed)


def strides_program(
    base_reg: str,
    steps: int,
    stride_lines: Optional[int] = None,
    registers: Sequence[str] = GENERAL_REGISTERS,
) -> Gen[Program]:
    if steps < 3:
        raise ValueError("a stride needs at least 3 steps to train the prefetcher")
    dests = reg_name(False, [r for r in registers if r != base_reg])
    stride = constant(stride_lines) if stride_lines is not None else int_range(1, 4)

    def build(n: int) -> Gen[Program]:
        return sequence([dests] * steps).map(
            lambda rds: isa.validate_program(
                [isa.ldr(rd, base_reg, LINE_BYTES * n * i) for i, rd in enumerate(rds)]
            )
        )

    return stride.bind(build)


def gen_strides(
    base_reg: str, steps: int, stride_lines: Optional[int], seed: Any, **kwargs: Any
) -> Program:
    """
    Loads ``ldr r_i, [base_reg, #64*n*i]`` for ``i < steps``.

    Example:
        >>> [ins.offset for ins in gen_strides("x10", 3, 2, seed=1)]
        [0, 128, 256]
    """
    return strides_program(base_reg, steps, stride_lines, **kwargs).run(seed)


def branch_program(
    then_gen: Gen[Sequence[Instruction]],
    else_gen: Gen[Sequence[Instruction]],
    registers: Sequence[str] = GENERAL_REGISTERS,
) -> Gen[Program]:
    """``cmp r1, r2; b.eq then; <else>; b end; <then>``."""
    operands = reg_name(False, registers)

    def sample(rng: np.random.Generator) -> Program:
        r1, r2 = operands(rng), operands(rng)
        else_body = list(else_gen(rng))
        then_body = list(then_gen(rng))
        if not then_body or not else_body:
            raise ValueError("both branch bodies must be non-empty")
        program = (
            [isa.cmp(r1, r2), isa.beq(len(else_body) + 2)]
            + else_body
            + [isa.b(len(then_body) + 1)]
            + then_body
        )
        return isa.validate_program(program)

    return Gen(sample, "branch_program")


def gen_branch(
    then_gen: Gen[Sequence[Instruction]], else_gen: Gen[Sequence[Instruction]], seed: Any, **kwargs: Any
) -> Program:
    return branch_program(then_gen, else_gen, **kwargs).run(seed)


def _padded(body: Gen[Program], padding: int) -> Gen[List[Instruction]]:
    if padding == 0:
        return body.map(list)
    # padding goes after the first instruction so the later ones settle in the cache
    return body.map(lambda p: list(p[:1]) + [isa.nop()] * padding + list(p[1:]))


def build_generator(cfg: GeneratorConfig) -> Gen[Program]:
    """The generator selected by a campaign's ``generator`` section."""
    if cfg.kind == "random":
        return random_program(cfg.weights, cfg.length, allow_xzr=cfg.allow_xzr)
    if cfg.kind == "loads":
        return loads_program(cfg.max_len, allow_xzr=cfg.allow_xzr)
    if cfg.kind == "strides":
        return strides_program(cfg.base_reg, cfg.steps, cfg.stride_lines)
    if cfg.kind == "branch-loads":
        loads = loads_program(cfg.max_len, allow_xzr=cfg.allow_xzr)
        return branch_program(_padded(loads, cfg.then_padding), loads.map(list))
    raise ValueError(f"unknown generator '{cfg.kind}'")


GENERATORS: Dict[str, str] = {
    "random": "weighted random instructions",
    "loads": "sequences of loads",
    "strides": "stride loads from one base register",
    "branch-loads": "if-then-else over two load sequences",
}


def program_seed(campaign_seed: int, index: int) -> List[int]:
    """Seed of the ``index``-th program of a campaign."""
    return [campaign_seed, index]
