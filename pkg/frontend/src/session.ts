/** Labeling session state: fetched queue, cursor, undo stack.
 *
 * At most one label post is in flight; a press while busy is dropped, so a
 * rapid double-keypress equals a single press. A label counts as saved only
 * after the server acknowledges it (2xx), and undo restores the previous
 * server state with a relabel post ("skip" when the crop had no label, which
 * returns it to the unlabeled queue).
 */

import { CropMeta, Label, LabelingApi } from './api.js';

interface UndoEntry {
  cropId: string;
  previous: Label | null;
}

export class LabelSession {
  private queue: CropMeta[] = [];
  private cursor = 0;
  private undoStack: UndoEntry[] = [];
  private inFlight = false;

  constructor(
    private readonly api: LabelingApi,
    private readonly annotator: string = 'ui',
  ) {}

  async refresh(limit = 50): Promise<void> {
    this.queue = await this.api.getCrops('unlabeled', limit);
    this.cursor = 0;
  }

  current(): CropMeta | null {
    return this.cursor < this.queue.length ? this.queue[this.cursor] : null;
  }

  remaining(): number {
    return Math.max(0, this.queue.length - this.cursor);
  }

  get busy(): boolean {
    return this.inFlight;
  }

  canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  /** Post a label for the current crop and advance. False when dropped
   * (busy or queue exhausted); throws on network failure with no state
   * change, so the caller can retry. */
  async label(value: Label): Promise<boolean> {
    const crop = this.current();
    if (this.inFlight || crop === null) return false;
    this.inFlight = true;
    try {
      await this.api.postLabel(crop.crop_id, value, this.annotator);
      this.undoStack.push({
        cropId: crop.crop_id,
        previous: (crop.label as Label | null) ?? null,
      });
      this.cursor += 1;
      return true;
    } finally {
      this.inFlight = false;
    }
  }

  /** Re-post the previous label of the last decision and step back. */
  async undo(): Promise<boolean> {
    if (this.inFlight || this.undoStack.length === 0) return false;
    const entry = this.undoStack[this.undoStack.length - 1];
    this.inFlight = true;
    try {
      await this.api.postLabel(entry.cropId, entry.previous ?? 'skip', this.annotator);
      this.undoStack.pop();
      if (this.cursor > 0) this.cursor -= 1;
      return true;
    } finally {
      this.inFlight = false;
    }
  }
}
