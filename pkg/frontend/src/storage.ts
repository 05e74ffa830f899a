/**
 * Resume support. Progress is keyed by a fingerprint of the task file
 * content, so reloading the same export restores the session and loading
 * a different one starts clean. Storage is injected: the app passes
 * window.localStorage, tests pass a Map-backed fake.
 */

import { AnnotationQueue } from "./queue.js";

export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

const PREFIX = "annotation-ui/v1/";

/** FNV-1a over UTF-16 code units; collision risk is irrelevant here. */
export function fileFingerprint(text: string): string {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193);
  }
  return (hash >>> 0).toString(16).padStart(8, "0");
}

export function saveProgress(store: KeyValueStore, fingerprint: string, queue: AnnotationQueue): void {
  store.setItem(PREFIX + fingerprint, JSON.stringify(queue.snapshot()));
}

/** Restore into the queue; true when a snapshot existed and was applied. */
export function loadProgress(store: KeyValueStore, fingerprint: string, queue: AnnotationQueue): boolean {
  const raw = store.getItem(PREFIX + fingerprint);
  if (raw === null) return false;
  let snap: unknown;
  try {
    snap = JSON.parse(raw);
  } catch {
    return false;
  }
  if (
    typeof snap !== "object" || snap === null ||
    !Array.isArray((snap as { labels?: unknown }).labels) ||
    typeof (snap as { position?: unknown }).position !== "number"
  ) {
    return false;
  }
  queue.restore(snap as { position: number; labels: [string, boolean][] });
  return true;
}

export function clearProgress(store: KeyValueStore, fingerprint: string): void {
  store.removeItem(PREFIX + fingerprint);
}
