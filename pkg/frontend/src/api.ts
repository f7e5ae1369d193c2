// Typed client for the chat gateway's JSON API. The server base URL is the
// single deploy-time configuration point for this UI.

export const API_BASE = "http://127.0.0.1:8080";

export interface Awaiting {
  kind: "slot" | "confirmation" | "free";
  prompt: string | null;
}

export interface ChatResponse {
  session_id: string;
  replies: string[];
  phase: string;
  cart_summary: string;
  awaiting: Awaiting;
  refusal?: boolean;
}

export interface HealthResponse {
  status: string;
  catalog_version: number;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private readonly base: string = API_BASE,
    private readonly fetchImpl: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.base}${path}`, init);
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const body = await response.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  chat(message: string, sessionId: string | null): Promise<ChatResponse> {
    const payload: Record<string, unknown> = { message };
    if (sessionId) payload.session_id = sessionId;
    return this.request<ChatResponse>("/api/chat", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  async cart(sessionId: string): Promise<string> {
    const body = await this.request<{ cart_summary: string }>(
      `/api/cart/${encodeURIComponent(sessionId)}`,
    );
    return body.cart_summary;
  }

  health(): Promise<HealthResponse> {
    return this.request<HealthResponse>("/api/health");
  }
}
