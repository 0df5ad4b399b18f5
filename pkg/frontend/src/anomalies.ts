/** Anomaly table state: server-side filters (kind, min confidence, lat/lon
 * box) and client-side sorting. Filter changes re-query the API. */

import { Anomaly, AnomalyApi, AnomalyFilters } from './api.js';

export type SortKey = 'kind' | 'class_id' | 'confidence' | 'timestamp_ms' | 'lat' | 'lon';

export class AnomalyBrowser {
  rows: Anomaly[] = [];
  filters: AnomalyFilters = { minConf: 0 };
  sortKey: SortKey = 'timestamp_ms';
  sortAsc = true;

  constructor(private readonly api: AnomalyApi) {}

  async refresh(): Promise<Anomaly[]> {
    this.rows = await this.api.getAnomalies(this.filters);
    this.applySort();
    return this.rows;
  }

  async setMinConf(value: number): Promise<Anomaly[]> {
    this.filters.minConf = value;
    return this.refresh();
  }

  async setKind(kind: string): Promise<Anomaly[]> {
    this.filters.kind = kind || undefined;
    return this.refresh();
  }

  async setBbox(bbox: string): Promise<Anomaly[]> {
    this.filters.bbox = bbox || undefined;
    return this.refresh();
  }

  sortBy(key: SortKey): void {
    if (this.sortKey === key) {
      this.sortAsc = !this.sortAsc;
    } else {
      this.sortKey = key;
      this.sortAsc = true;
    }
    this.applySort();
  }

  private applySort(): void {
    const key = this.sortKey;
    const dir = this.sortAsc ? 1 : -1;
    this.rows = [...this.rows].sort((a, b) => {
      const va = a[key];
      const vb = b[key];
      if (va === null) return 1; // missing geo sorts last either way
      if (vb === null) return -1;
      if (va < vb) return -dir;
      if (va > vb) return dir;
      return a.id < b.id ? -dir : dir;
    });
  }
}
