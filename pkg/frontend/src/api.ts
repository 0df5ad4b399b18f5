/** Typed client for the roadsight annotation/review HTTP API. */

export type Label = 'damaged' | 'undamaged' | 'skip';

export interface CropMeta {
  crop_id: string;
  class_id: number;
  conf: number;
  frame: string;
  timestamp_ms: number;
  image_url: string;
  label: string | null;
}

export interface Stats {
  total_crops: number;
  labeled: number;
  damaged: number;
  undamaged: number;
  skipped: number;
  anomalies: { total: number; road_damage: number; damaged_sign: number };
}

export interface Anomaly {
  id: string;
  kind: 'road_damage' | 'damaged_sign';
  class_id: number;
  confidence: number;
  frame: string;
  cx: number;
  cy: number;
  w: number;
  h: number;
  lat: number | null;
  lon: number | null;
  timestamp_ms: number;
}

export interface AnomalyFilters {
  kind?: string;
  minConf?: number;
  /** "minLat,minLon,maxLat,maxLon" */
  bbox?: string;
}

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

/** What the labeling session needs from a client. */
export interface LabelingApi {
  getCrops(status?: string, limit?: number): Promise<CropMeta[]>;
  postLabel(cropId: string, label: Label, annotator?: string): Promise<void>;
}

/** What the anomaly browser needs from a client. */
export interface AnomalyApi {
  getAnomalies(filters?: AnomalyFilters): Promise<Anomaly[]>;
}

export class ApiClient {
  constructor(private readonly baseUrl: string = '') {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await fetch(this.baseUrl + path);
    if (!res.ok) throw new ApiError(`GET ${path} failed (${res.status})`, res.status);
    return (await res.json()) as T;
  }

  async getCrops(status = 'unlabeled', limit = 50): Promise<CropMeta[]> {
    const page = await this.getJson<{ items: CropMeta[] }>(
      `/api/crops?status=${status}&limit=${limit}`,
    );
    return page.items;
  }

  async getStats(): Promise<Stats> {
    return this.getJson<Stats>('/api/stats');
  }

  async getAnomalies(filters: AnomalyFilters = {}): Promise<Anomaly[]> {
    const params = new URLSearchParams();
    if (filters.kind) params.set('kind', filters.kind);
    if (filters.minConf !== undefined) params.set('min_conf', String(filters.minConf));
    if (filters.bbox) params.set('bbox', filters.bbox);
    const qs = params.toString();
    const page = await this.getJson<{ items: Anomaly[] }>(
      `/api/anomalies${qs ? '?' + qs : ''}`,
    );
    return page.items;
  }

  async postLabel(cropId: string, label: Label, annotator = 'ui'): Promise<void> {
    const res = await fetch(`${this.baseUrl}/api/crops/${cropId}/label`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ label, annotator }),
    });
    if (!res.ok) throw new ApiError(`label ${cropId} failed (${res.status})`, res.status);
  }

  imageUrl(crop: CropMeta): string {
    return this.baseUrl + crop.image_url;
  }
}
