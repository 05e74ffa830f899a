/**
 * Keyboard bindings. Every label action is reachable without a pointer:
 * digits pick a slot, y/n label it, arrows and space move through the
 * queue. Resolution is pure so the map can be tested without a DOM.
 *
 *   1-9      select slot
 *   j / down next slot        k / up   previous slot
 *   y        label selected slot yes   n  label it no
 *   a        label every slot yes (extraction shortcut)
 *   space    next task                 backspace  previous task
 *   g        jump to first incomplete task
 *   s        submit (export labels)
 */

export type KeyAction =
  | { type: "select-slot"; index: number }
  | { type: "move-slot"; delta: 1 | -1 }
  | { type: "label"; value: boolean }
  | { type: "label-all"; value: boolean }
  | { type: "next-task" }
  | { type: "prev-task" }
  | { type: "first-incomplete" }
  | { type: "submit" };

export function isEditableTarget(target: EventTarget | null): boolean {
  if (typeof HTMLElement === "undefined") return false;
  if (!(target instanceof HTMLElement)) return false;
  const tag = target.tagName;
  return tag === "INPUT" || tag === "TEXTAREA" || tag === "SELECT" || target.isContentEditable;
}

export function resolveKey(key: string): KeyAction | null {
  if (key >= "1" && key <= "9") {
    return { type: "select-slot", index: Number(key) - 1 };
  }
  switch (key) {
    case "j":
    case "ArrowDown":
      return { type: "move-slot", delta: 1 };
    case "k":
    case "ArrowUp":
      return { type: "move-slot", delta: -1 };
    case "y":
      return { type: "label", value: true };
    case "n":
      return { type: "label", value: false };
    case "a":
      return { type: "label-all", value: true };
    case " ":
    case "ArrowRight":
      return { type: "next-task" };
    case "Backspace":
    case "ArrowLeft":
      return { type: "prev-task" };
    case "g":
      return { type: "first-incomplete" };
    case "s":
      return { type: "submit" };
    default:
      return null;
  }
}
