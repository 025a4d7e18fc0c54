// Typed client for the survey service endpoints.

export interface SessionCreated {
  token: string;
  item_count: number;
}

export interface SessionState {
  item_count: number;
  completed: boolean;
  next_item: number | null;
  next_page: number | null;
  completion_code: string | null;
}

export interface QuestionOption {
  value: number | string;
  label: string;
}

export interface Question {
  id: string;
  text: string;
  options: QuestionOption[];
}

export interface PageOneView {
  item: number;
  item_count: number;
  code: string;
  summary: string;
  questions: Question[];
  answered: boolean;
}

export interface PageTwoView {
  item: number;
  item_count: number;
  code: string;
  summary_1: string;
  summary_2: string;
  question: Question;
  answered: boolean;
}

export interface SubmitAck {
  ok: boolean;
  next_item: number | null;
  next_page: number | null;
  completed: boolean;
  completion_code: string | null;
}

export interface PageOneAnswers {
  accurate: number;
  complete: number;
  concise: number;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class SurveyApi {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!resp.ok) {
      let detail = `${resp.status}`;
      try {
        const parsed = await resp.json();
        detail = typeof parsed.detail === "string" ? parsed.detail : JSON.stringify(parsed);
      } catch {
        // keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  createSession(participantId: string, seed?: number): Promise<SessionCreated> {
    return this.request("POST", "/api/session", { participant_id: participantId, seed: seed ?? null });
  }

  state(token: string): Promise<SessionState> {
    return this.request("GET", `/api/session/${token}/state`);
  }

  pageOne(token: string, item: number): Promise<PageOneView> {
    return this.request("GET", `/api/session/${token}/item/${item}/page1`);
  }

  submitPageOne(token: string, item: number, answers: PageOneAnswers, elapsedSeconds: number): Promise<SubmitAck> {
    return this.request("POST", `/api/session/${token}/item/${item}/page1`, {
      ...answers,
      elapsed_seconds: elapsedSeconds,
    });
  }

  pageTwo(token: string, item: number): Promise<PageTwoView> {
    return this.request("GET", `/api/session/${token}/item/${item}/page2`);
  }

  submitPageTwo(token: string, item: number, preference: string, rationale: string, elapsedSeconds: number): Promise<SubmitAck> {
    return this.request("POST", `/api/session/${token}/item/${item}/page2`, {
      preference,
      rationale,
      elapsed_seconds: elapsedSeconds,
    });
  }
}
