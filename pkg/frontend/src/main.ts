/** DOM wiring for the annotation console and anomaly browser. */

import { Anomaly, ApiClient, CropMeta, Label } from './api.js';
import { AnomalyBrowser, SortKey } from './anomalies.js';
import { LabelSession } from './session.js';

const RUBRIC = [
  'Spray-painted graffiti',
  'Stickers covering the face',
  'Bent or physically damaged',
  'Rusty surface',
];

const KEY_TO_LABEL: Record<string, Label> = {
  d: 'damaged',
  u: 'undamaged',
  s: 'skip',
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function fmtTime(ms: number): string {
  return `${(ms / 1000).toFixed(1)}s`;
}

class App {
  private api = new ApiClient('');
  private session = new LabelSession(this.api, 'browser');
  private browser = new AnomalyBrowser(this.api);
  private cropByFrame = new Map<string, CropMeta>();
  private retry: (() => void) | null = null;

  async start(): Promise<void> {
    el('rubric').innerHTML = RUBRIC.map((r) => `<li>${r}</li>`).join('');
    document.addEventListener('keydown', (ev) => this.onKey(ev));
    el('retry-button').addEventListener('click', () => {
      this.hideError();
      this.retry?.();
    });

    const slider = el<HTMLInputElement>('conf-slider');
    slider.addEventListener('input', () => {
      el('conf-value').textContent = Number(slider.value).toFixed(2);
    });
    slider.addEventListener('change', () =>
      this.guard(async () => {
        await this.browser.setMinConf(Number(slider.value));
        this.renderAnomalies();
      }),
    );
    el<HTMLSelectElement>('kind-select').addEventListener('change', (ev) =>
      this.guard(async () => {
        await this.browser.setKind((ev.target as HTMLSelectElement).value);
        this.renderAnomalies();
      }),
    );
    el('bbox-apply').addEventListener('click', () =>
      this.guard(async () => {
        const vals = ['min-lat', 'min-lon', 'max-lat', 'max-lon'].map(
          (id) => el<HTMLInputElement>(id).value.trim(),
        );
        const bbox = vals.every((v) => v !== '') ? vals.join(',') : '';
        await this.browser.setBbox(bbox);
        this.renderAnomalies();
      }),
    );

    await this.guard(async () => {
      const all = await this.api.getCrops('all', 10000);
      for (const crop of all) {
        if (!this.cropByFrame.has(crop.frame)) this.cropByFrame.set(crop.frame, crop);
      }
      await this.session.refresh();
      await this.browser.refresh();
      await this.renderLabeling();
      this.renderAnomalies();
    });
  }

  private onKey(ev: KeyboardEvent): void {
    if (ev.target instanceof HTMLInputElement || ev.target instanceof HTMLSelectElement) {
      return;
    }
    const key = ev.key.toLowerCase();
    if (key in KEY_TO_LABEL) {
      ev.preventDefault();
      this.act(() => this.session.label(KEY_TO_LABEL[key]));
    } else if (key === 'z') {
      ev.preventDefault();
      this.act(() => this.session.undo());
    }
  }

  private act(step: () => Promise<boolean>): void {
    void this.guard(async () => {
      el('save-state').textContent = 'saving…';
      const applied = await step();
      el('save-state').textContent = applied ? 'saved' : '';
      if (this.session.current() === null && this.session.remaining() === 0) {
        await this.session.refresh(); // pull skipped/remaining work back in
      }
      await this.renderLabeling();
    }, step);
  }

  /** Run a step; on failure show the retry banner without losing state. */
  private async guard(fn: () => Promise<void>, retryStep?: () => Promise<boolean>): Promise<void> {
    try {
      await fn();
    } catch (err) {
      el('save-state').textContent = '';
      el('error-text').textContent = String(err);
      el('error-banner').classList.remove('hidden');
      this.retry = retryStep ? () => this.act(retryStep) : () => void this.start();
    }
  }

  private hideError(): void {
    el('error-banner').classList.add('hidden');
  }

  private async renderLabeling(): Promise<void> {
    const stats = await this.api.getStats();
    const done = stats.labeled + stats.skipped;
    el('progress-text').textContent =
      `${stats.labeled} labeled (${stats.damaged} damaged / ${stats.undamaged} undamaged), ` +
      `${stats.skipped} skipped of ${stats.total_crops}`;
    const pct = stats.total_crops ? Math.round((100 * done) / stats.total_crops) : 0;
    el('progress-fill').style.width = `${pct}%`;

    const crop = this.session.current();
    if (crop === null) {
      el('crop-card').classList.add('hidden');
      el('done-card').classList.remove('hidden');
      el('done-text').textContent =
        `All crops handled: ${stats.damaged} damaged, ${stats.undamaged} undamaged, ` +
        `${stats.skipped} skipped.`;
      return;
    }
    el('done-card').classList.add('hidden');
    el('crop-card').classList.remove('hidden');
    el<HTMLImageElement>('crop-image').src = this.api.imageUrl(crop);
    el('crop-meta').textContent =
      `${crop.crop_id}  class ${crop.class_id}  conf ${crop.conf.toFixed(2)}  ` +
      `frame ${crop.frame} @ ${fmtTime(crop.timestamp_ms)}` +
      (crop.label ? `  (previously ${crop.label})` : '');
    el('queue-left').textContent = `${this.session.remaining()} in queue`;
  }

  private renderAnomalies(): void {
    const head = el('anomaly-head');
    const cols: [SortKey, string][] = [
      ['kind', 'kind'],
      ['class_id', 'class'],
      ['confidence', 'confidence'],
      ['timestamp_ms', 'time'],
      ['lat', 'lat'],
      ['lon', 'lon'],
    ];
    head.innerHTML =
      cols
        .map(
          ([key, title]) =>
            `<th data-key="${key}">${title}${
              this.browser.sortKey === key ? (this.browser.sortAsc ? ' ▲' : ' ▼') : ''
            }</th>`,
        )
        .join('') + '<th>crop</th>';
    head.querySelectorAll('th[data-key]').forEach((th) =>
      th.addEventListener('click', () => {
        this.browser.sortBy(th.getAttribute('data-key') as SortKey);
        this.renderAnomalies();
      }),
    );

    const body = el('anomaly-body');
    body.innerHTML = this.browser.rows.map((r) => this.anomalyRow(r)).join('');
    el('anomaly-count').textContent = `${this.browser.rows.length} records`;
  }

  private anomalyRow(r: Anomaly): string {
    const crop = this.cropByFrame.get(r.frame);
    const link = crop
      ? `<a href="${this.api.imageUrl(crop)}" target="_blank">${r.frame}</a>`
      : r.frame;
    const geo = (v: number | null) => (v === null ? '-' : v.toFixed(6));
    return (
      `<tr><td>${r.kind}</td><td>${r.class_id}</td>` +
      `<td>${r.confidence.toFixed(3)}</td><td>${fmtTime(r.timestamp_ms)}</td>` +
      `<td>${geo(r.lat)}</td><td>${geo(r.lon)}</td><td>${link}</td></tr>`
    );
  }
}

new App().start();
