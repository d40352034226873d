"""Instrumentation bus for the interpreter.

Subscribers derive from :class:`Hooks` and override any of the four callbacks.
Callbacks run synchronously, in registration order, inside the interpreter loop.

Stack mutation is opt-in. A hook that wants to rewrite operands before an
opcode executes sets ``mutates_stack = True`` and must be registered on a
``HookSet(..., allow_stack_mutation=True)``. Without that flag every step view
carries a tuple snapshot of the stack, so a normal run cannot be perturbed by
its observers.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Iterable, Sequence

if TYPE_CHECKING:
    from .interpreter import Frame, FrameOutcome


class FrameView:
    """Read-only window onto a live call frame."""

    __slots__ = ("_frame",)

    def __init__(self, frame: Frame):
        self._frame = frame

    @property
    def index(self) -> int:
        return self._frame.index

    @property
    def depth(self) -> int:
        return self._frame.depth

    @property
    def parent_index(self) -> int | None:
        p = self._frame.parent
        return None if p is None else p.index

    @property
    def kind(self) -> str:
        return self._frame.kind

    @property
    def address(self) -> int:
        return self._frame.address

    @property
    def code_address(self) -> int:
        return self._frame.code_address

    @property
    def caller(self) -> int:
        return self._frame.caller

    @property
    def value(self) -> int:
        return self._frame.value

    @property
    def calldata(self) -> bytes:
        return self._frame.calldata

    @property
    def code(self) -> bytes:
        return self._frame.code

    @property
    def is_static(self) -> bool:
        return self._frame.static

    @property
    def returndata(self) -> bytes:
        return self._frame.returndata

    @property
    def memory_size(self) -> int:
        return len(self._frame.memory)

    def read_memory(self, offset: int, size: int) -> bytes:
        mem = self._frame.memory
        chunk = bytes(mem[offset : offset + size])
        return chunk.ljust(size, b"\x00")

    def __repr__(self) -> str:
        return f"FrameView(index={self.index}, depth={self.depth}, kind={self.kind}, address=0x{self.address:040x})"


class Step:
    """One pre- or post-step event.

    ``stack`` is bottom-to-top, so ``stack[-1]`` is the top word. On pre-step it
    holds the operands about to be consumed, on post-step the results.
    """

    __slots__ = ("frame", "pc", "op", "gas", "stack", "seq")

    def __init__(self, frame: FrameView, pc: int, op: int, gas: int, stack: Sequence[int], seq: int):
        self.frame = frame
        self.pc = pc
        self.op = op
        self.gas = gas
        self.stack = stack
        self.seq = seq  # instruction counter within the frame

    @property
    def depth(self) -> int:
        return self.frame.depth

    @property
    def frame_index(self) -> int:
        return self.frame.index


class Hooks:
    mutates_stack = False

    def enter_frame(self, frame: FrameView) -> None:
        pass

    def exit_frame(self, frame: FrameView, outcome: FrameOutcome) -> None:
        pass

    def pre_step(self, step: Step) -> None:
        pass

    def post_step(self, step: Step) -> None:
        pass


class HookSet:
    def __init__(self, *hooks: Hooks, allow_stack_mutation: bool = False):
        for h in hooks:
            if h.mutates_stack and not allow_stack_mutation:
                raise ValueError(f"{type(h).__name__} mutates the stack; pass allow_stack_mutation=True")
        self.hooks: tuple[Hooks, ...] = hooks
        self.allow_stack_mutation = allow_stack_mutation

    @classmethod
    def of(cls, hooks: HookSet | Hooks | Iterable[Hooks] | None) -> HookSet | None:
        if hooks is None or isinstance(hooks, HookSet):
            return hooks
        if isinstance(hooks, Hooks):
            return cls(hooks)
        return cls(*hooks)

    def enter_frame(self, frame: FrameView) -> None:
        for h in self.hooks:
            h.enter_frame(frame)

    def exit_frame(self, frame: FrameView, outcome: FrameOutcome) -> None:
        for h in self.hooks:
            h.exit_frame(frame, outcome)

    def pre_step(self, step: Step) -> None:
        for h in self.hooks:
            h.pre_step(step)

    def post_step(self, step: Step) -> None:
        for h in self.hooks:
            h.post_step(step)


class StepRecorder(Hooks):
    """Keeps (frame index, depth, pc, op) for every pre-step; handy for tests and debugging."""

    def __init__(self):
        self.events: list[tuple[int, int, int, int]] = []

    def pre_step(self, step: Step) -> None:
        self.events.append((step.frame.index, step.frame.depth, step.pc, step.op))
